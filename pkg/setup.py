from setuptools import setup

from rfss import __version__


setup(name='rfss',
      version=__version__,
      description='Multi-standard RF source separation corpus generator and evaluator',
      license='BSD-3-Clause',
      packages=['rfss', ],
      package_data={
            'rfss': ['templates/*', 'install_resources/*']
      },
      zip_safe=True,
      python_requires='>=3.8',
      install_requires=[
            "celery>=5.2",
            "billiard",
            "jinja2",
            "numpy>=1.20",
            "scipy>=1.6",
      ],
      extras_require={
            'hdf5': ['h5py>=3.0'],
      },
      entry_points={
            'console_scripts': ['rfss = rfss.cli:main'],
      },
     )
