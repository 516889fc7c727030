"""
crossmamba setup
"""
from pathlib import Path
import re

import setuptools

HERE = Path(__file__).parent.resolve()

# The name of the project
name = "crossmamba"
# The name of the Python package
package_name = "crossmamba"

long_description = (HERE / "README.md").read_text()

version = re.search(
    r'__version__ = "([^"]+)"', (HERE / package_name / "_version.py").read_text()
).group(1)

setup_args = dict(
    name=name,
    version=version,
    author="crossmamba authors",
    description=(
        "Position-aware cross state space scans for multi-camera BEV encoders"
    ),
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=setuptools.find_packages(),
    install_requires=[
        "einops",
        "entrypoints",
        "numpy",
        "traitlets",
    ],
    zip_safe=False,
    include_package_data=True,
    python_requires=">=3.8",
    license="Apache-2.0",
    platforms="Linux, Mac OS X, Windows",
    keywords=["state space models", "cross attention", "BEV"],
    classifiers=[
        "License :: OSI Approved :: Apache Software License",
        "Programming Language :: Python",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Topic :: Scientific/Engineering",
    ],
    entry_points={
        "console_scripts": [
            "crossmamba = crossmamba.cli:main",
        ],
        "crossmamba.xqssm_backends": [
            "recurrent = crossmamba.xqssm.recurrent:RecurrentXQSSM",
            "parallel = crossmamba.xqssm.parallel:ParallelXQSSM",
        ],
    },
)


if __name__ == "__main__":
    setuptools.setup(**setup_args)
