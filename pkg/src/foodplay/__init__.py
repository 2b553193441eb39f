"""Self-supervised cross-modal food embeddings on a desk-scale pipeline.

Audio and proprioceptive features from food-interaction trials define
which samples count as similar; an image encoder is trained with a triplet
loss to reproduce that similarity, and small perceptron heads measure how
well the embeddings predict material properties.
"""

__version__ = "0.1.0"
