"""Optional build of the compiled kernel extension.

The package works without it (a pure-Python fallback is selected at import);
building the extension speeds up the hot paths:

    python setup.py build_ext --inplace
"""
from setuptools import setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/seqforge/_ckernels.pyx"],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
