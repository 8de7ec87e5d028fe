"""
Setup script for LPBF Toolpath
"""

from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="lpbf-toolpath",
    version="1.0.0",
    author="LPBF Toolpath Developers",
    description="Deep Q-learning toolpath generation for laser powder bed fusion with an analytic melt-pool simulator",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["examples", "examples.*"]),
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering",
    ],
    python_requires=">=3.8",
    install_requires=[
        "numpy>=1.19.0",
        "PyYAML>=5.1",
        "scipy>=1.6",
        "shapely>=2.0",
        "tqdm>=4.50",
    ],
    extras_require={
        "dev": [
            "pytest>=6.0",
            "pytest-cov>=2.0",
        ],
    },
    entry_points={
        "console_scripts": [
            "lpbf-toolpath=lpbf_toolpath.cli:main",
        ],
    },
)
