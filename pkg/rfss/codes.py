"""
W-CDMA spreading and scrambling codes: OVSF channelization trees and the downlink Gold scrambling
sequence built from two 18-stage shift registers.
"""
from functools import lru_cache

import numpy as np
from celery.utils.log import get_task_logger

from rfss.exceptions import ParameterError

logger = get_task_logger(__name__)

GOLD_DEGREE = 18
GOLD_PERIOD = 2 ** GOLD_DEGREE - 1
# Quadrature branch offset of the complex scrambling code
GOLD_IQ_SHIFT = 131072
FRAME_CHIPS = 38400
NUM_PRIMARY_CODES = 512

# Feedback taps as offsets below the newest register stage: x^18 = x^7 + 1 and x^18 = x^10 + x^7 + x^5 + 1
X_FEEDBACK = (0, 7)
Y_FEEDBACK = (0, 5, 7, 10)


def ovsf_codes(spreading_factor: int) -> np.ndarray:
    """
    All codes of one OVSF tree layer, row k being code C(sf, k). Rows are built from the parent layer as
    [c, c] for child 2k and [c, -c] for child 2k+1.
    """
    if spreading_factor < 1 or spreading_factor & (spreading_factor - 1):
        raise ParameterError(f'Spreading factor must be a power of two, got {spreading_factor}')
    codes = np.ones((1, 1), dtype=np.int8)
    while codes.shape[0] < spreading_factor:
        children = np.empty((2 * codes.shape[0], 2 * codes.shape[1]), dtype=np.int8)
        children[0::2] = np.hstack([codes, codes])
        children[1::2] = np.hstack([codes, -codes])
        codes = children
    return codes


def _linear_recurrence(feedback, initial_state, length) -> np.ndarray:
    degree = len(initial_state)
    block = degree - max(feedback)
    seq = np.zeros(length + degree, dtype=np.uint8)
    seq[:degree] = initial_state
    for start in range(0, length, block):
        stop = min(block, length - start)
        newest = seq[start + feedback[0]:start + feedback[0] + stop].copy()
        for tap in feedback[1:]:
            newest ^= seq[start + tap:start + tap + stop]
        seq[start + degree:start + degree + stop] = newest
    return seq[:length]


@lru_cache(maxsize=None)
def _gold_m_sequences():
    x = _linear_recurrence(X_FEEDBACK, [1] + [0] * (GOLD_DEGREE - 1), GOLD_PERIOD)
    y = _linear_recurrence(Y_FEEDBACK, [1] * GOLD_DEGREE, GOLD_PERIOD)
    x.setflags(write=False)
    y.setflags(write=False)
    logger.debug('Generated downlink scrambling m-sequences')
    return x, y


def gold_binary(code_index: int, length: int = FRAME_CHIPS, offset: int = 0) -> np.ndarray:
    """z_n(i) = x((i + n) mod N) xor y(i) as 0/1 chips, starting at chip offset."""
    if not 0 <= code_index < GOLD_PERIOD:
        raise ParameterError(f'Scrambling code index {code_index} out of range')
    x, y = _gold_m_sequences()
    i = (np.arange(length) + offset) % GOLD_PERIOD
    return x[(i + code_index) % GOLD_PERIOD] ^ y[i]


def scrambling_code(code_index: int, length: int = FRAME_CHIPS) -> np.ndarray:
    """Complex downlink scrambling code, one frame long, with unit-magnitude chips."""
    in_phase = 1 - 2 * gold_binary(code_index, length).astype(np.float64)
    quadrature = 1 - 2 * gold_binary(code_index, length, offset=GOLD_IQ_SHIFT).astype(np.float64)
    return (in_phase + 1j * quadrature) / np.sqrt(2)


def primary_scrambling_index(primary_code: int) -> int:
    if not 0 <= primary_code < NUM_PRIMARY_CODES:
        raise ParameterError(f'Primary scrambling code must lie in [0, {NUM_PRIMARY_CODES}), got {primary_code}')
    return 16 * primary_code


def spread_users(symbols: np.ndarray, code_indices, spreading_factor: int, powers=None,
                 scrambling: np.ndarray = None) -> np.ndarray:
    """
    Spread per-user symbol rows with OVSF codes, weight by sqrt of the user powers, sum, and optionally
    multiply by a (frame-periodic) scrambling code.
    """
    symbols = np.atleast_2d(symbols)
    num_users, num_symbols = symbols.shape
    if len(code_indices) != num_users or len(set(code_indices)) != num_users:
        raise ParameterError('Each user needs its own channelization code')
    if powers is None:
        powers = np.ones(num_users)
    tree = ovsf_codes(spreading_factor)
    chips = np.zeros(num_symbols * spreading_factor, dtype=np.complex128)
    for user, code_index in enumerate(code_indices):
        chips += np.sqrt(powers[user]) * np.kron(symbols[user], tree[code_index])
    if scrambling is not None:
        chips *= np.resize(scrambling, chips.size)
    return chips


def despread(chips: np.ndarray, code_index: int, spreading_factor: int, scrambling: np.ndarray = None):
    if scrambling is not None:
        chips = chips * np.conj(np.resize(scrambling, chips.size))
    code = ovsf_codes(spreading_factor)[code_index]
    return chips.reshape(-1, spreading_factor) @ code / spreading_factor
