"""Build script: compiles the optional codec extension.

The package is fully functional without the extension (a pure-Python
codec is selected at import time when _wirecore is missing), so any
compiler or Cython failure downgrades to a warning instead of aborting
the install.
"""

import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(
            "WARNING: building the bridgewire._wirecore extension failed; "
            "falling back to the pure-Python codec (%s)" % exc,
            file=sys.stderr,
        )


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        print(
            "WARNING: Cython not available; skipping the compiled codec",
            file=sys.stderr,
        )
        return []
    return cythonize(
        ["src/bridgewire/_wirecore.pyx"],
        compiler_directives={"language_level": "3"},
    )


setup(
    ext_modules=extensions(),
    cmdclass={"build_ext": optional_build_ext},
)
