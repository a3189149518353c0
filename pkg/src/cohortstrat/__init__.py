"""Patient stratification from joint phenotype/genotype features."""

__version__ = "0.1.0"

CANCER_TYPES = (
    "lung",
    "prostate",
    "breast",
    "ovarian",
    "pancreas",
    "colon_rectum",
    "liver",
)


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""
