"""File-backed stores for records, checkpoints and result tables."""
