import os
from pathlib import Path

#: Environment variable consulted when no output folder was registered.
OUTPUT_ENV_VAR = "INFORMATION_TRACKER_OUT_DIR"


class Consts:
    _OUTPUT = None

    @property
    def OUTPUT(self) -> Path:
        if self._OUTPUT:
            return Path(self._OUTPUT).resolve()
        if os.environ.get(OUTPUT_ENV_VAR):
            return Path(os.environ[OUTPUT_ENV_VAR]).resolve()
        return (Path.cwd() / "results").resolve()


def set_output_folder(path):
    """Register the output folder path.

    This globally registers the output path and uses it as default, if `out_dir` is not provided to a specific
    function call.
    """
    Consts._OUTPUT = path


def get_output_folder(out_dir=None) -> Path:
    """Get the output folder.

    This provides the default set using `set_output_folder` (or the `INFORMATION_TRACKER_OUT_DIR` environment
    variable) if `out_dir` is None.
    Otherwise `out_dir` is returned.
    """
    return Path(out_dir or Consts().OUTPUT)
