#! /usr/bin/env python

# Copyright 2026 Canonical Ltd.  This software is licensed under the
# GNU Affero General Public License version 3 (see the file LICENSE).

import os

from setuptools import find_packages, setup

here = os.path.abspath(os.path.dirname(__file__))

with open(os.path.join(here, "README.rst")) as f:
    README = f.read()
with open(os.path.join(here, "NEWS")) as f:
    README += "\n\n" + f.read()

requires = [
    "numpy",
    "Pillow",
    "PyYAML",
    "scikit-image",
    "statsd",
    "torch>=1.10",
]
test_requires = [
    "fixtures",
    "testscenarios",
    "testtools",
]
docs_requires = {
    "sphinx",
}

setup(
    name="mipkd",
    version="0.1.0",
    packages=find_packages(exclude=["examples", "examples.*"]),
    include_package_data=True,
    zip_safe=False,
    description="Knowledge distillation for super-resolution networks "
    "through feature and block prior mixers",
    long_description=README,
    long_description_content_type="text/x-rst",
    license="AGPL v3",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: GNU Affero General Public License v3",
        "Operating System :: OS Independent",
        "Programming Language :: Python",
        "Topic :: Scientific/Engineering :: Image Processing",
    ],
    install_requires=requires,
    tests_require=test_requires,
    extras_require=dict(
        test=test_requires,
        docs=docs_requires,
    ),
    test_suite="mipkd",
    entry_points={
        "console_scripts": [
            "mipkd = mipkd.cli:main",
        ],
    },
)
