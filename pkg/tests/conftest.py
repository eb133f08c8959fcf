import json

import pytest

from treeconv.numerics import SeededRng
from treeconv.trees import Vocab, load_ast

# AST of the C snippet `int a = b + 3;` as produced by pycparser-style kinds:
# Decl -> (TypeDecl -> IdentifierType), (BinaryOp -> ID, Constant).
DECL_TREE_DOC = json.dumps({
    "symbol": "Decl",
    "children": [
        {"symbol": "TypeDecl",
         "children": [{"symbol": "IdentifierType", "children": []}]},
        {"symbol": "BinaryOp",
         "children": [{"symbol": "ID", "children": []},
                      {"symbol": "Constant", "children": []}]},
    ],
})


@pytest.fixture
def decl_tree():
    vocab = Vocab()
    ast = load_ast(DECL_TREE_DOC, vocab, unknown="add")
    return ast, vocab


@pytest.fixture
def rng():
    return SeededRng(12345)
