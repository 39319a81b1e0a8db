class LegalKGError(Exception):
    """Base class for all errors raised by this package."""


class CorpusEmptyError(LegalKGError):
    pass


class InvalidConfigError(LegalKGError, ValueError):
    pass


class BackendUnavailableError(LegalKGError):
    pass


class CacheMissError(LegalKGError):
    def __init__(self, digest: str, stage_tag: str = ""):
        super().__init__(f"no stored response for request {digest} ({stage_tag or 'untagged'})")
        self.digest = digest
        self.stage_tag = stage_tag


class TemplateInvalidError(LegalKGError, ValueError):
    pass


class PassFailureError(LegalKGError):
    pass


class EmptyGraphError(LegalKGError, ValueError):
    pass


class OverrideError(LegalKGError, ValueError):
    def __init__(self, message: str, ids=()):
        super().__init__(message)
        self.ids = list(ids)


class InvalidBaseError(LegalKGError, ValueError):
    pass
