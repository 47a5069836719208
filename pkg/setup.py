from setuptools import setup

setup(
    name='cfc',
    version='0.1.0',
    packages=['cfc', 'cfc.examples'],
    license='GPL3',
    author='The cfc developers',
    description='Cross-spectral face completion for NIR to VIS face '
                'synthesis and recognition via generation',
    package_dir={'cfc': 'cfc'},
    install_requires=['numpy', 'scipy', 'matplotlib', 'pandas', 'torch',
                      'scikit-learn', 'Pillow', 'tqdm'],
    extras_require={
        'doc': ['numpydoc', 'sphinx', 'sphinx_rtd_theme'],
        'tests': ['pytest'],
    },
    entry_points={
        'console_scripts': ['cfc=cfc.cli:main'],
    },
    test_suite='cfc_tests',
    classifiers=[
      'Programming Language :: Python :: 3',
      'License :: OSI Approved :: GNU General Public License v3 or later '
      '(GPLv3+)',
      'Operating System :: OS Independent',
      'Topic :: Scientific/Engineering :: Image Recognition',
    ]
)
