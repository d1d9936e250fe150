"""Builds the optional compiled split-search kernels.

The package works without them (a NumPy fallback is selected at import
time); the extension just makes forest training and batch prediction a
lot faster.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "latentwire.forest._kernels_cy",
                ["src/latentwire/forest/_kernels_cy.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []

for ext in extensions:
    ext.optional = True

setup(ext_modules=extensions)
