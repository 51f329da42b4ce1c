# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Joint latent action and world model training at desk scale."""

import os

from setuptools import find_packages, setup

readme = open('README.rst').read()
history = open('CHANGES.rst').read()

tests_require = [
    'check-manifest>=0.25',
    'coverage>=4.0',
    'isort>=4.2.2',
    'pydocstyle>=1.0.0',
    'pytest-cov>=1.8.0',
    'pytest>=6.0.0',
]

extras_require = {
    'docs': [
        'Sphinx>=4.0.0',
    ],
    'tests': tests_require,
}

extras_require['all'] = []
for reqs in extras_require.values():
    extras_require['all'].extend(reqs)

install_requires = [
    'Flask>=2.2.0',
    'click>=8.0.0',
    'einops>=0.6.0',
    'matplotlib>=3.5.0',
    'numpy>=1.22.0',
    'pydantic>=2.0.0',
    'torch>=2.0.0',
]

packages = find_packages(exclude=['tests', 'examples', 'examples.*'])


# Get the version string. Cannot be done with import!
g = {}
with open(os.path.join('cola_world', 'version.py'), 'rt') as fp:
    exec(fp.read(), g)
    version = g['__version__']

setup(
    name='cola-world',
    version=version,
    description=__doc__,
    long_description=readme + '\n\n' + history,
    keywords='latent action model world model flow matching',
    license='MIT',
    author='CoLA-World contributors',
    packages=packages,
    zip_safe=False,
    include_package_data=True,
    platforms='any',
    python_requires='>=3.9',
    entry_points={
        'console_scripts': [
            'cola-world = cola_world.cli:cli',
        ],
    },
    extras_require=extras_require,
    install_requires=install_requires,
    tests_require=tests_require,
    classifiers=[
        'Environment :: Console',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Operating System :: OS Independent',
        'Programming Language :: Python',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Programming Language :: Python :: Implementation :: CPython',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
        'Development Status :: 3 - Alpha',
    ],
)
