"""Exception hierarchy shared by all phonolab modules."""


class PhonolabError(Exception):
    """Base class for every error raised deliberately by phonolab."""


class ContractError(PhonolabError, ValueError):
    """A caller violated a documented precondition."""


class UnknownPhonemeError(PhonolabError, KeyError):
    def __init__(self, symbol, system=None):
        self.symbol = symbol
        self.system = system
        where = f" in {system}" if system else ""
        super().__init__(f"unknown phoneme {symbol!r}{where}")

    def __str__(self):
        return self.args[0]


class ParseError(PhonolabError, ValueError):
    """Malformed input file; carries the 1-based line number when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        loc = ""
        if path is not None:
            loc += f"{path}"
        if line is not None:
            loc += f":{line}"
        super().__init__(f"{loc}: {message}" if loc else message)


class UnsupportedFormatError(PhonolabError, ValueError):
    pass


class UnsupportedVersionError(ParseError):
    pass


class DataError(PhonolabError, ValueError):
    """Input data is inconsistent (missing files, mismatched lengths, ...)."""


class TrainingError(PhonolabError, RuntimeError):
    pass


class OutOfVocabularyError(DataError):
    def __init__(self, word):
        self.word = word
        super().__init__(f"word {word!r} is not in the lexicon")
