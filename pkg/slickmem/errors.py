"""Exceptions raised by slickmem."""


# any error generated by slickmem:
class SlickMemError(Exception):
    pass


# wrong shapes, dimensions, ranges or levels passed to a library function:
class InvalidArgumentError(SlickMemError, ValueError):
    pass


# attention asked to attend over zero keys:
class EmptyMemoryError(SlickMemError):
    pass


class UnsupportedConfigurationError(SlickMemError):
    pass


# every class undefined, so there is nothing to average:
class EvaluationError(SlickMemError):
    pass


class ConfigError(SlickMemError):
    pass


# malformed raster file:
class ParseError(SlickMemError):
    def __init__(self, message, offset):
        self.message = message
        self.offset = offset

    def __str__(self):
        return "at byte offset {}; {}".format(self.offset, self.message)


# content that parses but breaks a rule (class range, prompt bounds, duplicates):
class ValidationError(SlickMemError):
    def __init__(self, message, line=None, position=None, lines=None):
        self.message = message
        self.line = line
        self.position = position
        self.lines = lines

    def __str__(self):
        if self.lines is not None:
            return "at lines {}; {}".format(", ".join(str(n) for n in self.lines), self.message)
        if self.line is not None:
            return "at line {}; {}".format(self.line, self.message)
        if self.position is not None:
            return "at row, col={}; {}".format(self.position, self.message)
        return self.message


class MissingAssetError(SlickMemError):
    def __init__(self, missing):
        self.missing = list(missing)

    def __str__(self):
        return "missing assets: {}".format(", ".join(self.missing))


# wraps whatever went wrong while processing one image of a stream:
class StreamError(SlickMemError):
    def __init__(self, image_id, cause):
        self.image_id = image_id
        self.cause = cause

    def __str__(self):
        return "while processing image {!r}: {}".format(self.image_id, self.cause)
