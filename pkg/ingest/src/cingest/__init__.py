"""C-source ingestion into the AST interchange and dataset formats.

`convert` turns one C translation unit into an interchange document whose
symbols are parser node kinds (identifier names and literal values are
dropped); `pipeline` walks a labeled directory tree and assembles a dataset
file plus an ingestion report.
"""

from cingest.convert import IngestError, ingest_source, strip_preprocessor
from cingest.pipeline import IngestManifest, IngestReport, ingest_corpus, ingest_file

__version__ = "0.1.0"

__all__ = [
    "IngestError",
    "IngestManifest",
    "IngestReport",
    "ingest_corpus",
    "ingest_file",
    "ingest_source",
    "strip_preprocessor",
    "__version__",
]
