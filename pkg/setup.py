"""Build script for the optional compiled ranking / clustering kernels.

The package works without the extensions (pure numpy fallbacks are selected
at import time); building them just makes evaluation and clustering faster.
"""

from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/sctreid/_core/rank_cy.pyx", "src/sctreid/_core/kmeans_cy.pyx"],
        compiler_directives={"language_level": "3"},
    )
    include_dirs = [numpy.get_include()]
except ImportError:
    ext_modules = []
    include_dirs = []

setup(ext_modules=ext_modules, include_dirs=include_dirs)
