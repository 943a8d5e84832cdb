"""Build script.

The package is pure Python; the n-gram hashing kernel additionally ships as a
Cython extension (swipe._hashkernel) that is used automatically when it has
been compiled. If Cython or a C compiler is unavailable the build silently
falls back to the pure-Python kernel, which produces identical output.

Build the accelerated kernel in a source checkout with:

    python setup.py build_ext --inplace
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/swipe/_hashkernel.pyx"],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
