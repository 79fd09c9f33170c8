#!/usr/bin/env python3

"""Module setup."""

import os
import re

from setuptools import find_packages, setup

with open(os.path.join("ggda", "__init__.py"), "rt") as f:
    version_match = re.search('__version__ = "([^"]+)"', f.read())
    assert version_match is not None
    version = version_match.group(1)

with open("requirements.txt", "rt") as f:
    requirements = f.read().splitlines()

with open("README.md", "rt") as f:
    readme = f.read()

setup(
    name="ggda",
    version=version,
    packages=find_packages(exclude=("tests",)),
    entry_points={"console_scripts": ["ggda = ggda:cl_main"]},
    test_suite="tests",
    install_requires=requirements,
    python_requires=">=3.8",
    description="Graph gradual domain adaptation through generated intermediate graphs",
    long_description=readme,
    long_description_content_type="text/markdown",
    keywords=["graph", "domain adaptation", "optimal transport", "gromov-wasserstein", "gcn", "self-training"],
    classifiers=[
        "Development Status :: 4 - Beta",
        "Environment :: Console",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: GNU General Public License v3 (GPLv3)",
        "Operating System :: OS Independent",
        "Programming Language :: Python",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3 :: Only",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
    ],
)
