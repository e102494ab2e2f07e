from typing import Optional


class RegraspError(Exception):
    """Base error; `code` is what the CLI prints in its JSON error line."""

    code = "regrasp_error"

    def __init__(self, message: str, code: Optional[str] = None):
        super().__init__(message)
        if code:
            self.code = code

    def to_dict(self) -> dict:
        return {"error": self.code, "message": str(self)}


class InvalidObjectError(RegraspError):
    code = "invalid_object"


class InvalidTrialError(RegraspError):
    """The commanded gripper pose left the arena; the trial must be resampled."""

    code = "invalid_trial"


class ShapeMismatchError(RegraspError):
    code = "shape_mismatch"

    def __init__(self, layer: str, detail: str):
        super().__init__(f"layer '{layer}': {detail}")
        self.layer = layer


class StaleCacheError(RegraspError):
    code = "stale_cache"


class FoldError(RegraspError):
    code = "fold_error"


class CalibrationError(RegraspError):
    code = "calibration_error"


class MissingInputError(RegraspError):
    code = "missing_input"


class ReplayMismatchError(RegraspError):
    code = "replay_mismatch"
