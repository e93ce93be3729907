"""Character-level software log triage pipeline.

Subpackages and modules:

- ``corpus``: log ingestion, PPU cleaning, Tukey size filtering, corpus assembly
- ``vocab``: character vocabulary build / encode / decode
- ``nn``: dense-tensor layers with forward+backward passes (numba or numpy backend)
- ``lm``: character-level seq2seq LSTM language model and embedding export
- ``classifier``: residual 1D-CNN log classifier, training loop, metrics
- ``docembed``: overlapping sliding-window document embeddings over providers
- ``synlog``: labeled synthetic log generator
- ``cli``: command line entry point
"""

__version__ = "0.1.0"
