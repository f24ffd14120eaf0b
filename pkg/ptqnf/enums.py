from enum import Enum, auto


class Mode(Enum):
    QUANTUM = auto()
    CLASSICAL = auto()
    BOTH = auto()


class Parity(Enum):
    EVEN = 1
    ODD = -1
    NONE = 0


class CheckStatus(Enum):
    PASS = auto()
    FAIL = auto()
    VACUOUS = auto()
    SKIPPED = auto()


class CheckName(Enum):
    POTENTIAL_SYMMETRY = auto()
    PT_MATRIX = auto()
    REALITY = auto()
    IMAG_W = auto()
    ODD_VANISHING = auto()
    PARITY_LADDER = auto()
    HOMOLOGICAL_RESIDUAL = auto()
    GRADED_VS_LITERAL = auto()
    COMMUTATOR_ORACLE = auto()
    LINEAR_RULE_ORACLE = auto()
    BRACKET_PROPERTIES = auto()
    CLASSICAL_LIMIT = auto()
    CLASSICAL_LIE_TRANSFORM = auto()
    SPECTRAL_REALITY = auto()
    SPECTRA_RESIDUAL = auto()
    ORDER_SCALING = auto()
    RADIUS_STABILITY = auto()


def parse_enum(enum_cls, value: str):
    """
    Look up an enum member by its name, ignoring case and surrounding whitespace.

    :param enum_cls: enum class to search
    :param value: member name, e.g. "quantum"
    :returns: the matching member, or None if there is no match
    """

    name = str(value).strip().upper()
    for member in enum_cls:
        if member.name == name:
            return member
    return None
