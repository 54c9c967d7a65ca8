"""End-to-end scoring model: encoders, enhancement layer, cosine score.

``AlignmentModel`` wires one text encoder and one code encoder into an
enhancement variant and exposes a differentiable path from raw texts to
the final score.  Trainable tensors (enhancement parameters plus toy
embedding tables marked trainable) are reachable as one flat name -> array
dict so optimizers and checkpoints can treat them uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoders import (
    EmbeddingOutput,
    EncoderSpec,
    ToyEncoderParameters,
    encode,
    tokenize,
)
from .enhancement import (
    CROSS_ATTENTION,
    LINEAR,
    EnhancementParameters,
    enhance_cross_attention,
    enhance_linear,
    enhancement_backward,
)
from .scoring import cosine_backward, match_score

TEXT_TABLE = "encoder/text/table"
CODE_TABLE = "encoder/code/table"


@dataclass
class PreparedText:
    """Backend-independent handle: toy texts keep row indices, frozen
    backends keep the embedding itself."""

    tokens: tuple[str, ...]
    rows: np.ndarray | None = None  # toy backends
    fixed: EmbeddingOutput | None = None  # file / service backends


@dataclass
class ModelCache:
    task_prep: PreparedText
    code_prep: PreparedText
    task_emb: EmbeddingOutput
    code_emb: EmbeddingOutput
    enhancement_cache: object
    e_t: np.ndarray
    e_c: np.ndarray


class AlignmentModel:
    def __init__(
        self,
        text_spec: EncoderSpec,
        text_params,
        code_spec: EncoderSpec,
        code_params,
        enhancement: EnhancementParameters,
    ):
        self.text_spec = text_spec
        self.text_params = text_params
        self.code_spec = code_spec
        self.code_params = code_params
        self.enhancement = enhancement

    @property
    def variant(self) -> str:
        return self.enhancement.variant

    def parameters(self) -> dict[str, np.ndarray]:
        """Live references to every trainable tensor, in stable order."""
        params = dict(self.enhancement.tensors)
        if self.text_spec.backend == "toy" and self.text_spec.trainable:
            params[TEXT_TABLE] = self.text_params.table
        if self.code_spec.backend == "toy" and self.code_spec.trainable:
            params[CODE_TABLE] = self.code_params.table
        return params

    def set_parameters(self, tensors: dict[str, np.ndarray]) -> None:
        for name, value in tensors.items():
            if name == TEXT_TABLE:
                self.text_params.table = value.copy()
            elif name == CODE_TABLE:
                self.code_params.table = value.copy()
            else:
                self.enhancement.tensors[name] = value.copy()

    def _side(self, side: str):
        if side == "task":
            return self.text_spec, self.text_params
        return self.code_spec, self.code_params

    def prepare(self, side: str, text: str) -> PreparedText:
        """Resolve a text once; toy lookups stay live against the table."""
        spec, params = self._side(side)
        if spec.backend == "toy":
            tokens = tokenize(text)
            return PreparedText(tokens=tokens, rows=params.row_indices(tokens))
        emb = encode(spec, params, text)
        return PreparedText(tokens=emb.tokens, fixed=emb)

    def _embed(self, side: str, prep: PreparedText) -> EmbeddingOutput:
        if prep.fixed is not None:
            return prep.fixed
        _, params = self._side(side)
        vectors = params.table[prep.rows]
        return EmbeddingOutput(tokens=prep.tokens, vectors=vectors, pooled=vectors.mean(axis=0))

    def score_prepared(
        self,
        task_prep: PreparedText,
        code_prep: PreparedText,
        training: bool = False,
        dropout_rng: np.random.Generator | None = None,
    ) -> tuple[float, ModelCache]:
        task_emb = self._embed("task", task_prep)
        code_emb = self._embed("code", code_prep)
        if self.variant == LINEAR:
            pair, enh_cache = enhance_linear(self.enhancement, task_emb.pooled, code_emb.pooled)
        else:
            pair, enh_cache = enhance_cross_attention(
                self.enhancement, task_emb.vectors, code_emb.vectors, training, dropout_rng
            )
        score = match_score(pair)
        cache = ModelCache(
            task_prep=task_prep,
            code_prep=code_prep,
            task_emb=task_emb,
            code_emb=code_emb,
            enhancement_cache=enh_cache,
            e_t=pair.e_t,
            e_c=pair.e_c,
        )
        return score, cache

    def score_texts(
        self,
        task: str,
        code: str,
        training: bool = False,
        dropout_rng: np.random.Generator | None = None,
    ) -> tuple[float, ModelCache]:
        return self.score_prepared(
            self.prepare("task", task), self.prepare("code", code), training, dropout_rng
        )

    def _table_gradient(
        self, side: str, prep: PreparedText, d_input: np.ndarray, grads: dict[str, np.ndarray]
    ) -> None:
        spec, _ = self._side(side)
        if spec.backend != "toy" or not spec.trainable:
            return
        key = TEXT_TABLE if side == "task" else CODE_TABLE
        if key not in grads:
            return
        if d_input.ndim == 1:
            # Pooled-vector gradient: every token row shares d_input / L.
            d_rows = np.tile(d_input / len(prep.tokens), (len(prep.tokens), 1))
        else:
            d_rows = d_input
        np.add.at(grads[key], prep.rows, d_rows)

    def backward(
        self, cache: ModelCache, d_score: float, grads: dict[str, np.ndarray]
    ) -> dict[str, np.ndarray]:
        """Accumulate gradients of ``d_score * score`` into ``grads``."""
        d_e_t, d_e_c = cosine_backward(cache.e_t, cache.e_c, d_score)
        grads, d_task_in, d_code_in = enhancement_backward(
            self.enhancement, cache.enhancement_cache, d_e_t, d_e_c, grads
        )
        self._table_gradient("task", cache.task_prep, d_task_in, grads)
        self._table_gradient("code", cache.code_prep, d_code_in, grads)
        return grads

    def zero_gradients(self) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(arr) for name, arr in self.parameters().items()}
