class ExportError(Exception):
    """Any failure turning an image into an ATN1 file."""


class BackboneUnavailableError(ExportError):
    """The optional ML dependencies or pretrained weights are missing."""
