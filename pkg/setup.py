import os

from setuptools import setup

ext_modules = []
if os.environ.get("PRIVDETECT_NO_EXT", "") in ("", "0"):
    try:
        import numpy as np
        import scipy  # noqa: F401  (cimports cython_blas at build time)
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension(
                "privdetect._kernels.lstm_cy",
                ["src/privdetect/_kernels/lstm_cy.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
