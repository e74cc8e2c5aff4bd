"""Build script: compiles the optional C extension for the hot Newton kernels.

The package is fully functional without the extension (a pure-Python twin of
the kernel module ships alongside it); any build failure degrades to a
source-only install with a warning instead of aborting.
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build the extension if possible; warn and continue otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing entirely
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # compile/link error
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        sys.stderr.write(
            "\nWARNING: building the compiled kernel extension failed; "
            "falling back to the pure-Python backend.\n"
            f"  reason: {exc}\n\n"
        )


def _extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        sys.stderr.write(
            "\nWARNING: Cython not available; installing without the "
            "compiled kernel extension.\n\n"
        )
        return []
    ext = Extension(
        "replica_es._kernels",
        sources=["src/replica_es/_kernels.pyx"],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3)


setup(
    ext_modules=_extensions(),
    cmdclass={"build_ext": optional_build_ext},
)
