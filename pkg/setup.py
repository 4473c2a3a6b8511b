"""Build script for the optional compiled kernels.

The package is fully functional without the extension: masktext._kernels
falls back to a pure numpy implementation when the compiled module is
missing (or when MASKTEXT_PURE=1).
"""

from setuptools import Extension, setup


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "masktext._kernels._speed",
        ["src/masktext/_kernels/_speed.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )


setup(ext_modules=extensions())
