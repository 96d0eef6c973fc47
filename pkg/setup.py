"""Build script for the optional compiled projection kernel.

The package is pure Python except for one hot loop: repeatedly projecting
Gaussian draws onto the nonnegative cone when simulating chi-bar-squared
mixture weights.  That loop is compiled with Cython when a C toolchain is
available.  If compilation fails for any reason the install proceeds and the
package falls back to the pure NumPy implementation at import time.
"""

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build the extension if possible, otherwise warn and continue."""

    def run(self):
        try:
            build_ext.run(self)
        except Exception as exc:
            print(f"warning: skipping compiled kernel ({exc}); "
                  "the pure Python fallback will be used")

    def build_extension(self, ext):
        try:
            build_ext.build_extension(self, ext)
        except Exception as exc:
            print(f"warning: could not compile {ext.name} ({exc}); "
                  "the pure Python fallback will be used")


def make_extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "affiltest._projection",
        ["src/affiltest/_projection.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )


setup(ext_modules=make_extensions(), cmdclass={"build_ext": optional_build_ext})
