"""Document-level relation extraction with a relation correlation graph.

Submodules:

- ``autodiff``: tensors, a recording tape and reverse-mode gradients
- ``docred``: DocRED-format corpora, relation vocabularies and label statistics
- ``graph``: the relation co-occurrence / conditional / re-weighted graph
- ``encoder``: embeddings, BiLSTM, mention and entity pooling
- ``propagation``: multi-head graph attention over relation features
- ``classifier``: relation-aware bilinear scoring, MAT loss and decoding
- ``model``: the assembled extractor
- ``pipeline``: training, prediction, evaluation, checkpoints, ablations
- ``synthetic``: planted-correlation corpora for tests and benchmarks
- ``gradcheck``: finite-difference checks of each component
- ``cli``: the ``lace`` command
"""

__version__ = "0.1.0"
