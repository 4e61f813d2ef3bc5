"""Pluggable binary-classifier backends behind one contract.

Reference backends (always available, fully deterministic, JSON state):

  * "linear": bag-of-words logistic regression, L2-regularized, fit with
    L-BFGS on the full batch;
  * "nb": multinomial naive Bayes with add-one smoothing.

An optional "transformer" backend conforms to the same contract but is
feature-flagged: it needs torch + transformers and (on first use) a
pretrained checkpoint, so nothing in the core pipeline or test suite
depends on it.

Tokenization for the reference backends is fixed and recorded in every
model manifest: lowercase, split on non-alphanumeric runs, unigrams only.
"""

from __future__ import annotations

import json
import math
import os
import re
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize, sparse

from .errors import BackendUnavailable, InvalidInput

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

TRANSFORMER_FLAG = "MASKBOARD_ENABLE_TRANSFORMER"


def tokenize(text: str) -> list[str]:
    """Lowercased unigrams; token = maximal alphanumeric run."""
    return _TOKEN_RE.findall(text.lower())


class ClassifierBackend:
    """Contract: fit once, then `score(text)` in [0, 1], deterministic for
    fixed state and total on any UTF-8 text."""

    backend_id: str = ""

    def __init__(self, hyperparameters: dict | None = None):
        self.hyperparameters = dict(hyperparameters or {})
        self.fitted = False

    def fit(self, texts: Sequence[str], labels: Sequence[int], seed: int) -> None:
        raise NotImplementedError

    def score(self, text: str) -> float:
        raise NotImplementedError

    def score_batch(self, texts: Iterable[str]) -> list[float]:
        return [self.score(t) for t in texts]

    def state_bytes(self) -> bytes:
        raise NotImplementedError

    def load_state(self, blob: bytes) -> None:
        raise NotImplementedError


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


class LinearBackend(ClassifierBackend):
    """Bag-of-words logistic regression.

    State is a plain JSON document (vocab in index order, weights, bias),
    so serialize -> deserialize -> score is bit-identical.
    """

    backend_id = "linear"

    def __init__(self, hyperparameters: dict | None = None):
        super().__init__(hyperparameters)
        self.hyperparameters.setdefault("l2", 1.0)
        self.hyperparameters.setdefault("max_iter", 500)
        self.vocab: dict[str, int] = {}
        self.weights: np.ndarray | None = None
        self.bias = 0.0

    def _vectorize(self, texts: Sequence[str]) -> sparse.csr_matrix:
        rows, cols, vals = [], [], []
        for i, text in enumerate(texts):
            counts: dict[int, int] = {}
            for tok in tokenize(text):
                j = self.vocab.get(tok)
                if j is not None:
                    counts[j] = counts.get(j, 0) + 1
            for j, c in counts.items():
                rows.append(i)
                cols.append(j)
                vals.append(float(c))
        return sparse.csr_matrix((vals, (rows, cols)), shape=(len(texts), len(self.vocab)))

    def fit(self, texts: Sequence[str], labels: Sequence[int], seed: int) -> None:
        vocab_tokens = sorted({tok for t in texts for tok in tokenize(t)})
        self.vocab = {tok: i for i, tok in enumerate(vocab_tokens)}
        X = self._vectorize(texts)
        y = np.asarray(labels, dtype=np.float64)
        n, d = X.shape
        lam = float(self.hyperparameters["l2"])

        def objective(wb: np.ndarray):
            w, b = wb[:d], wb[d]
            z = X.dot(w) + b
            # log(1 + exp(-s*z)) computed stably
            m = np.maximum(z, 0.0)
            loglik = np.sum(m - y * z + np.log(np.exp(-m) + np.exp(z - m)))
            p = 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))
            grad_w = X.T.dot(p - y) + lam * w
            grad_b = np.sum(p - y)
            loss = loglik + 0.5 * lam * float(w @ w)
            return loss, np.concatenate([grad_w, [grad_b]])

        x0 = np.zeros(d + 1)
        res = optimize.minimize(
            objective, x0, jac=True, method="L-BFGS-B",
            options={"maxiter": int(self.hyperparameters["max_iter"])},
        )
        self.weights = res.x[:d].copy()
        self.bias = float(res.x[d])
        self.fitted = True

    def score(self, text: str) -> float:
        if not self.fitted:
            raise InvalidInput("backend not fitted")
        z = self.bias
        for tok in tokenize(text):
            j = self.vocab.get(tok)
            if j is not None:
                z += self.weights[j]
        return _sigmoid(z)

    def state_bytes(self) -> bytes:
        vocab_tokens = [None] * len(self.vocab)
        for tok, i in self.vocab.items():
            vocab_tokens[i] = tok
        doc = {
            "vocab": vocab_tokens,
            "weights": [float(w) for w in self.weights],
            "bias": self.bias,
            "hyperparameters": self.hyperparameters,
        }
        return json.dumps(doc, ensure_ascii=False).encode("utf-8")

    def load_state(self, blob: bytes) -> None:
        doc = json.loads(blob.decode("utf-8"))
        self.vocab = {tok: i for i, tok in enumerate(doc["vocab"])}
        self.weights = np.asarray(doc["weights"], dtype=np.float64)
        self.bias = float(doc["bias"])
        self.hyperparameters = dict(doc.get("hyperparameters", self.hyperparameters))
        self.fitted = True


class NaiveBayesBackend(ClassifierBackend):
    """Multinomial naive Bayes, add-one smoothing, class-prior aware."""

    backend_id = "nb"

    def __init__(self, hyperparameters: dict | None = None):
        super().__init__(hyperparameters)
        self.hyperparameters.setdefault("alpha", 1.0)
        self.token_counts: dict[str, list[float]] = {}
        self.class_docs = [0.0, 0.0]
        self.class_tokens = [0.0, 0.0]

    def fit(self, texts: Sequence[str], labels: Sequence[int], seed: int) -> None:
        self.token_counts = {}
        self.class_docs = [0.0, 0.0]
        self.class_tokens = [0.0, 0.0]
        for text, label in zip(texts, labels):
            y = int(label)
            self.class_docs[y] += 1
            for tok in tokenize(text):
                self.token_counts.setdefault(tok, [0.0, 0.0])[y] += 1
                self.class_tokens[y] += 1
        self.fitted = True

    def score(self, text: str) -> float:
        if not self.fitted:
            raise InvalidInput("backend not fitted")
        alpha = float(self.hyperparameters["alpha"])
        vocab_size = len(self.token_counts)
        n_docs = self.class_docs[0] + self.class_docs[1]
        log_odds = math.log((self.class_docs[1] or 0.5) / n_docs) - math.log((self.class_docs[0] or 0.5) / n_docs)
        for tok in tokenize(text):
            counts = self.token_counts.get(tok)
            if counts is None:
                continue  # unseen tokens cancel out under shared smoothing
            log_odds += math.log((counts[1] + alpha) / (self.class_tokens[1] + alpha * vocab_size))
            log_odds -= math.log((counts[0] + alpha) / (self.class_tokens[0] + alpha * vocab_size))
        return _sigmoid(log_odds)

    def state_bytes(self) -> bytes:
        doc = {
            "token_counts": {t: c for t, c in sorted(self.token_counts.items())},
            "class_docs": self.class_docs,
            "class_tokens": self.class_tokens,
            "hyperparameters": self.hyperparameters,
        }
        return json.dumps(doc, ensure_ascii=False).encode("utf-8")

    def load_state(self, blob: bytes) -> None:
        doc = json.loads(blob.decode("utf-8"))
        self.token_counts = {t: [float(a), float(b)] for t, (a, b) in doc["token_counts"].items()}
        self.class_docs = [float(x) for x in doc["class_docs"]]
        self.class_tokens = [float(x) for x in doc["class_tokens"]]
        self.hyperparameters = dict(doc.get("hyperparameters", self.hyperparameters))
        self.fitted = True


class TransformerBackend(ClassifierBackend):
    """Optional fine-tuned transformer classifier.

    Requires torch + transformers and a downloadable checkpoint, so it is
    gated behind the MASKBOARD_ENABLE_TRANSFORMER=1 env flag. Best-effort
    deterministic (seeds torch); never imported unless requested.
    """

    backend_id = "transformer"

    def __init__(self, hyperparameters: dict | None = None):
        super().__init__(hyperparameters)
        if os.environ.get(TRANSFORMER_FLAG) != "1":
            raise BackendUnavailable(
                f"transformer backend is feature-flagged; set {TRANSFORMER_FLAG}=1 "
                "(needs torch, transformers, and a pretrained checkpoint)"
            )
        try:
            import torch  # noqa: F401
            import transformers  # noqa: F401
        except ImportError as exc:
            raise BackendUnavailable(f"transformer backend needs torch+transformers: {exc}") from exc
        self.hyperparameters.setdefault("model_name", "roberta-base")
        self.hyperparameters.setdefault("epochs", 2)
        self.hyperparameters.setdefault("lr", 2e-5)
        self.hyperparameters.setdefault("max_length", 256)
        self._model = None
        self._tokenizer = None

    def _load_pretrained(self):
        import torch
        from transformers import AutoModelForSequenceClassification, AutoTokenizer

        name = self.hyperparameters["model_name"]
        self._tokenizer = AutoTokenizer.from_pretrained(name)
        self._model = AutoModelForSequenceClassification.from_pretrained(name, num_labels=2)
        self._device = "cuda" if torch.cuda.is_available() else "cpu"
        self._model.to(self._device)

    def fit(self, texts: Sequence[str], labels: Sequence[int], seed: int) -> None:
        import torch

        torch.manual_seed(seed)
        self._load_pretrained()
        optimizer = torch.optim.AdamW(self._model.parameters(), lr=float(self.hyperparameters["lr"]))
        max_len = int(self.hyperparameters["max_length"])
        self._model.train()
        for _ in range(int(self.hyperparameters["epochs"])):
            for start in range(0, len(texts), 8):
                batch = list(texts[start : start + 8])
                y = torch.tensor([int(v) for v in labels[start : start + 8]], device=self._device)
                enc = self._tokenizer(batch, truncation=True, max_length=max_len, padding=True, return_tensors="pt")
                enc = {k: v.to(self._device) for k, v in enc.items()}
                out = self._model(**enc, labels=y)
                out.loss.backward()
                optimizer.step()
                optimizer.zero_grad()
        self._model.eval()
        self.fitted = True

    def score(self, text: str) -> float:
        import torch

        if not self.fitted:
            raise InvalidInput("backend not fitted")
        enc = self._tokenizer(
            [text], truncation=True, max_length=int(self.hyperparameters["max_length"]),
            padding=True, return_tensors="pt",
        )
        enc = {k: v.to(self._device) for k, v in enc.items()}
        with torch.no_grad():
            logits = self._model(**enc).logits[0]
        return float(torch.softmax(logits, dim=-1)[1].item())

    def state_bytes(self) -> bytes:
        import io as _io

        import torch

        buf = _io.BytesIO()
        torch.save(self._model.state_dict(), buf)
        return buf.getvalue()

    def load_state(self, blob: bytes) -> None:
        import io as _io

        import torch

        self._load_pretrained()
        self._model.load_state_dict(torch.load(_io.BytesIO(blob), map_location=self._device))
        self._model.eval()
        self.fitted = True


BACKENDS: dict[str, type[ClassifierBackend]] = {
    LinearBackend.backend_id: LinearBackend,
    NaiveBayesBackend.backend_id: NaiveBayesBackend,
    TransformerBackend.backend_id: TransformerBackend,
}


def make_backend(backend_id: str, hyperparameters: dict | None = None) -> ClassifierBackend:
    if backend_id not in BACKENDS:
        raise InvalidInput(f"unknown backend {backend_id!r}; known: {sorted(BACKENDS)}")
    return BACKENDS[backend_id](hyperparameters)
