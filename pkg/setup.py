"""Optional compiled kernels; the package falls back to pure numpy without them."""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("UVMS_TRANSPORT_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension(
                "uvms_transport._kernels._ckernels",
                ["src/uvms_transport/_kernels/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
