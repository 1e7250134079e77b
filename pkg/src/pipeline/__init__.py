"""Stage commands behind the CLI; each writes one directory of a run."""
