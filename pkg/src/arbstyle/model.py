"""Inference wrapper around trained parameters (joint or AdaIN checkpoints)."""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgument
from .losses import LossNetwork, total_loss
from .networks import as_tensors, embedding_dim, predict_embedding, transfer_forward
from .tensor import Tensor, no_grad


class StyleTransferModel:
    """Runs in float64 regardless of the training precision."""

    def __init__(self, params, config, meta=None):
        self.config = config
        self.kind = config.model
        self.meta = dict(meta or {})
        loss_w = {k: v for k, v in params.items() if k.startswith("loss/")}
        self.net = LossNetwork(config.lossnet_config(), weights=loss_w or None)
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()
                       if not k.startswith("loss/")}
        self._tensors = as_tensors(self.params)
        if self.kind == "joint":
            self.transfer_cfg = config.transfer_config()
            self.prediction_cfg = config.prediction_config()
            out_b = self.params.get("predict/out/b")
            if out_b is not None and out_b.shape[0] != embedding_dim(self.transfer_cfg):
                raise InvalidArgument(
                    f"checkpoint prediction network emits {out_b.shape[0]} values but the transfer "
                    f"network expects an embedding of dimension {embedding_dim(self.transfer_cfg)}"
                )

    @classmethod
    def from_checkpoint(cls, ckpt):
        return cls(ckpt.params, ckpt.config, ckpt.meta)

    @property
    def style_digests(self):
        digests = self.meta.get("style_digests")
        if digests is None:
            return set()
        return {bytes(row).hex() for row in np.asarray(digests, dtype=np.uint8)}

    def _require_joint(self, what):
        if self.kind != "joint":
            raise InvalidArgument(f"{what} needs a jointly trained model, this is {self.kind!r}")

    def embed(self, style, return_bottleneck=False):
        """Style embedding [N, D] (and the bottleneck [N, B] if requested)."""
        self._require_joint("embed")
        with no_grad():
            S, z = predict_embedding(Tensor(np.asarray(style, dtype=np.float64)), self._tensors,
                                     self.prediction_cfg, return_bottleneck=True)
        if return_bottleneck:
            return S.values.data, z.data
        return S.values.data

    def render(self, content, embedding):
        self._require_joint("render")
        emb = np.asarray(embedding, dtype=np.float64)
        with no_grad():
            return transfer_forward(Tensor(np.asarray(content, dtype=np.float64)), Tensor(emb),
                                    self._tensors, self.transfer_cfg).data

    def stylize(self, content, style):
        if self.kind == "adain":
            from .training import adain_forward

            with no_grad():
                return adain_forward(Tensor(np.asarray(content, dtype=np.float64)),
                                     Tensor(np.asarray(style, dtype=np.float64)),
                                     self._tensors, self.net, self.config).data
        return self.render(content, self.embed(style))

    def evaluate(self, content, style, output=None):
        """LossReport of the stylization (or of ``output`` if given) against (c, s)."""
        if output is None:
            output = self.stylize(content, style)
        with no_grad():
            return total_loss(Tensor(output), Tensor(np.asarray(content, dtype=np.float64)),
                              Tensor(np.asarray(style, dtype=np.float64)), self.net, self.config.lambda_s)
