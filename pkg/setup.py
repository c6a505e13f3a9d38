#!/usr/bin/env python3

from setuptools import setup

# importlib-metadata dependency can be removed when 3.7 based systems are not in support cycles
# tomli dependency can be removed when 3.10 based systems are not in support cycles

install_requires = [
    'empy',
    'importlib-metadata; python_version < "3.8"',
    'numpy',
    'packaging',
    'pydantic>=2',
    'scipy',
    'tomli; python_version < "3.11"',
]

kwargs = {
    'name': 'monodrift',
    'version': '0.1.0',
    'packages': ['monodrift'],
    'package_dir': {'': 'src'},
    'package_data': {'monodrift': ['templates/*.em']},
    'entry_points': {
        'console_scripts': [
            'monodrift = monodrift.cli:main',
            'monodrift-validate = monodrift.cli:validate_main',
        ],
        'monodrift.studies': [
            'audit_operator = monodrift.graph_studies:AuditOperator',
            'check_graph = monodrift.graph_studies:CheckGraph',
            'dependence_study = monodrift.studies:DependenceStudy',
            'energy_study = monodrift.studies:EnergyStudy',
            'epsilon_study = monodrift.studies:EpsilonStudy',
            'lambda_study = monodrift.studies:LambdaStudy',
            'picard_study = monodrift.studies:PicardStudy',
            'solve = monodrift.studies:Solve',
            'uniqueness_study = monodrift.studies:UniquenessStudy',
        ]
    },
    'author': 'The monodrift authors',
    'keywords': ['SPDE', 'monotone operators', 'Monte Carlo'],
    'classifiers': [
        'Programming Language :: Python',
        'Programming Language :: Python :: 3',
        'License :: OSI Approved :: Apache Software License',
        'Topic :: Scientific/Engineering :: Mathematics',
    ],
    'description': 'Verification studies for stochastic evolution equations with maximal monotone drift',
    'long_description': 'Discretizes dX + AX dt + beta(X) dt = B(X) dW on a 1-D grid and checks the '
                        'estimates behind its well-posedness with reproducible Monte Carlo studies.',
    'license': 'Apache License 2.0',
    'python_requires': '>=3.7',

    'install_requires': install_requires,
    'extras_require': {
        'test': [
            'pytest'
        ]
    },
}

setup(**kwargs)
