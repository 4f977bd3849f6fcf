from jinja2 import Environment, FileSystemLoader, select_autoescape

from rfss.resources import get_templates_dir

JINJA_ENV = Environment(
    loader=FileSystemLoader(get_templates_dir()),
    autoescape=select_autoescape(['html', 'xml']),
    trim_blocks=True,
    lstrip_blocks=True,
    keep_trailing_newline=True,
)


def format_db(value):
    """Fixed-width dB figure; None renders as n/a."""
    if value is None:
        return '     n/a'
    return f'{value:8.2f}'


JINJA_ENV.filters['db'] = format_db


def render_template(name, **context):
    return JINJA_ENV.get_template(name).render(**context)
