"""Tree-structured convolutional classifier toolkit for program syntax trees.

The package is organized around a small pipeline:

- `trees`: AST data model, per-node annotations, interchange/dataset formats.
- `numerics`: dense linear algebra primitives, seeded RNG, SGD with momentum.
- `pretrain`: per-symbol embedding learning with a margin-based objective.
- `network`: the tree convolution model (forward and exact backward passes).
- `training`: dataset splits, the supervised loop, metrics, checkpoints.
- `baselines`: symbol-counting features with linear classifiers.
- `clustering`: embedding distances, agglomerative merges, dendrogram export.
- `datagen`: deterministic synthetic corpora for desk-scale experiments.
- `cli`: one executable exposing all of the above as subcommands.
"""

from treeconv.errors import NumericsError, ValidationError
from treeconv.trees import (
    AnnotatedAst,
    Ast,
    LabeledDataset,
    Vocab,
    annotate,
    build_vocab,
    child_coefficients,
    dump_ast,
    load_ast,
    load_dataset,
    save_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "AnnotatedAst",
    "Ast",
    "LabeledDataset",
    "NumericsError",
    "ValidationError",
    "Vocab",
    "annotate",
    "build_vocab",
    "child_coefficients",
    "dump_ast",
    "load_ast",
    "load_dataset",
    "save_dataset",
    "__version__",
]
