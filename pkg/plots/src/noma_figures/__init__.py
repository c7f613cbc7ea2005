"""Static figure rendering for the NOMA/Massive-MIMO simulator CSVs."""

__version__ = "0.1.0"
