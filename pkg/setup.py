#!/usr/bin/env python
"""Setup script for elephantlab."""

from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

# Runtime requirements stop at the development tools section
with open("requirements.txt", "r", encoding="utf-8") as f:
    requirements = []
    for line in f:
        line = line.strip()
        if line.startswith("# Development tools"):
            break
        if line and not line.startswith("#"):
            requirements.append(line)

setup(
    name="elephantlab",
    version="0.1.0",
    description="Elephant activation laboratory for streaming, continual and reinforcement learning",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests", "tests.*"]),
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.10",
    entry_points={
        "console_scripts": [
            "elephantlab=elephantlab:cli_main",
        ],
    },
    install_requires=requirements,
)
