"""Build script for the optional compiled skip-gram kernel.

The package is pure Python with a numpy core; only the skip-gram
negative-sampling inner loop has a Cython twin (it is the one loop that
cannot be vectorized). If Cython or a C compiler is unavailable the
build silently skips the extension and the package falls back to the
pure kernel at import time.

    pip install -e . --no-build-isolation     # builds extension if possible
    python setup.py build_ext --inplace       # explicit in-tree build
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "hgclust._sgns",
                ["src/hgclust/_sgns.pyx"],
                include_dirs=[numpy.get_include()],
                # -ffp-contract=off: keep float ops unfused so the kernel
                # stays reproducible across compilers.
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
