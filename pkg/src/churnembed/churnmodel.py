"""Edge embedding, churn prediction, and the four-part training objective.

The model is two ReLU stacks sharing nothing but the data path: an embedding
stack g mapping the d-dim edge feature vector to an m-dim embedding, and a
prediction stack whose last hidden layer is combined by a sigmoid weight
vector into the churn probability f. A context softmax matrix (one row per
vocabulary pair) supports the unsupervised context-inference loss.

The total objective is

    L = L_S + alpha * L_U + beta * L_T + gamma * L_R

with L_S the censoring-masked squared prediction error, L_U the negative
log-likelihood of sampled contexts (negative-sampling surrogate, with an
exact softmax mode for small vocabularies), L_T the temporal smoothness and
decay hinge, and L_R squared-L2 regularization of the dense stacks and the
sigmoid weights (context rows excluded). Gradients are exact everywhere;
kinked terms (hinge, L2 norm at zero) use subgradient 0 at the kink.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import netcore
from .bigraph import EdgeKey
from .errors import ContractError, DimensionError, DivergenceError, VocabularyError
from .netcore import DenseStack

ALL_TERMS = ("s", "u", "t", "r")


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_sigmoid(x):
    return -np.logaddexp(0.0, -np.asarray(x, dtype=float))


@dataclass
class LossWeights:
    """Trade-off weights of the objective and the regularizer."""

    alpha: float = 0.02
    beta: float = 0.01
    gamma: float = 1e-5
    lambda0: float = 1.0
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    lambda4: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "lambda0", "lambda1", "lambda2",
                     "lambda3", "lambda4"):
            if getattr(self, name) < 0:
                raise ContractError(f"{name} must be >= 0")


@dataclass
class ModelParams:
    """All trainable parameters."""

    embed: DenseStack            # d -> m
    pred: DenseStack             # m -> pred width
    w_s: np.ndarray              # (pred width,)
    ctx_weights: np.ndarray      # (vocab size, m)

    def __post_init__(self):
        if self.pred.in_dim != self.embed.out_dim:
            raise DimensionError("prediction stack input must match embedding output")
        if self.w_s.shape != (self.pred.out_dim,):
            raise DimensionError("sigmoid weights must match prediction stack output")
        if self.ctx_weights.ndim != 2 or self.ctx_weights.shape[1] != self.embed.out_dim:
            raise DimensionError("context weight rows must match embedding size")

    @property
    def d(self) -> int:
        return self.embed.in_dim

    @property
    def m(self) -> int:
        return self.embed.out_dim

    @property
    def vocab_size(self) -> int:
        return self.ctx_weights.shape[0]

    def flat(self) -> list[np.ndarray]:
        return self.embed.params() + self.pred.params() + [self.w_s, self.ctx_weights]

    def set_flat(self, arrays: list[np.ndarray]) -> None:
        want = len(self.flat())
        if len(arrays) != want:
            raise DimensionError(f"expected {want} parameter arrays, got {len(arrays)}")
        k = 0
        for i in range(self.embed.n_layers):
            self.embed.weights[i] = arrays[k]
            self.embed.biases[i] = arrays[k + 1]
            k += 2
        for i in range(self.pred.n_layers):
            self.pred.weights[i] = arrays[k]
            self.pred.biases[i] = arrays[k + 1]
            k += 2
        self.w_s = arrays[k]
        self.ctx_weights = arrays[k + 1]

    def copy(self) -> "ModelParams":
        return ModelParams(self.embed.copy(), self.pred.copy(),
                           self.w_s.copy(), self.ctx_weights.copy())


def init_model(d: int, m: int, l_p: int, l_n: int, vocab_size: int,
               rng: np.random.Generator, pred_width: int | None = None) -> ModelParams:
    """Fresh parameters; stacks use Glorot-uniform init, biases zero."""
    if l_p < 1 or l_n < 1:
        raise DimensionError("need at least one layer in each stack")
    width = m if pred_width is None else pred_width
    embed = netcore.init_stack([d] + [m] * l_p, rng)
    pred = netcore.init_stack([m] + [width] * l_n, rng)
    limit = np.sqrt(6.0 / (width + 1))
    w_s = rng.uniform(-limit, limit, size=width)
    rows = max(vocab_size, 1)
    climit = np.sqrt(6.0 / (rows + m))
    ctx = rng.uniform(-climit, climit, size=(rows, m))
    return ModelParams(embed, pred, w_s, ctx)


@dataclass
class TrainingExample:
    """One (edge, day) instance with everything its loss terms need.

    ``label`` is 1 for churn and is meaningful only when delta_next is 1.
    ``in_d`` marks edge-days whose edge persists to the next day (retained or
    censored-but-not-observed-to-churn); those carry z_next. Censored
    examples carry z_tuv, the features at the last uncensored day.
    """

    edge: EdgeKey
    day: int
    z: np.ndarray
    label: int
    delta_next: int
    in_d: bool
    z_next: np.ndarray | None = None
    z_tuv: np.ndarray | None = None
    context_ids: tuple[int, ...] = ()
    negative_ids: tuple[tuple[int, ...], ...] = field(default=())


class Batch:
    """Array view over a list of examples, validated against the contracts."""

    def __init__(self, examples: list[TrainingExample]):
        if not examples:
            raise ContractError("batch must be non-empty")
        self.n = len(examples)
        self.z = np.stack([np.asarray(e.z, dtype=float) for e in examples])
        self.label = np.array([float(e.label) for e in examples])
        self.delta = np.array([int(e.delta_next) for e in examples])
        next_rows, z_next, ref_is_current = [], [], []
        tuv_of_next, z_tuv = [], []
        for row, e in enumerate(examples):
            if not e.in_d:
                continue
            if e.z_next is None:
                raise ContractError(f"in_D example at day {e.day} lacks z_next")
            next_rows.append(row)
            z_next.append(np.asarray(e.z_next, dtype=float))
            if e.delta_next == 1:
                ref_is_current.append(True)
                tuv_of_next.append(-1)
            else:
                if e.z_tuv is None:
                    raise ContractError(f"censored in_D example at day {e.day} lacks z_tuv")
                ref_is_current.append(False)
                tuv_of_next.append(len(z_tuv))
                z_tuv.append(np.asarray(e.z_tuv, dtype=float))
        self.next_rows = np.array(next_rows, dtype=np.int64)
        self.z_next = np.stack(z_next) if z_next else np.zeros((0, self.z.shape[1]))
        self.ref_is_current = np.array(ref_is_current, dtype=bool)
        self.tuv_of_next = np.array(tuv_of_next, dtype=np.int64)
        self.z_tuv = np.stack(z_tuv) if z_tuv else np.zeros((0, self.z.shape[1]))
        ctx_example, ctx_ids, neg_ctx, neg_ids = [], [], [], []
        for row, e in enumerate(examples):
            if len(e.context_ids) != len(e.negative_ids):
                raise ContractError("context and negative lists must align")
            for c, negs in zip(e.context_ids, e.negative_ids):
                pos = len(ctx_ids)
                ctx_example.append(row)
                ctx_ids.append(int(c))
                for nid in negs:
                    neg_ctx.append(pos)
                    neg_ids.append(int(nid))
        self.ctx_example = np.array(ctx_example, dtype=np.int64)
        self.ctx_ids = np.array(ctx_ids, dtype=np.int64)
        self.neg_ctx = np.array(neg_ctx, dtype=np.int64)
        self.neg_ids = np.array(neg_ids, dtype=np.int64)


def as_batch(examples) -> Batch:
    return examples if isinstance(examples, Batch) else Batch(list(examples))


# -- forward-only operations -------------------------------------------------


def embed_edge(params: ModelParams, z: np.ndarray) -> np.ndarray:
    """Embedding g(z); depends on the feature vector only, never on identity."""
    out, _ = netcore.forward(params.embed, z)
    return out


def predict_churn(params: ModelParams, z: np.ndarray) -> np.ndarray | float:
    """Churn probability f(g(z)) in (0, 1)."""
    emb = embed_edge(params, z)
    h, _ = netcore.forward(params.pred, emb)
    s = h @ params.w_s
    out = sigmoid(s)
    return float(out) if np.ndim(out) == 0 else out


def context_log_likelihood(params: ModelParams, embedding: np.ndarray, ctx_id: int,
                           negative_ids=(), exact: bool = False) -> float:
    """Log-likelihood of one context given an embedding.

    Negative-sampling surrogate by default:
        log sigmoid(e . w_ctx) + sum_neg log sigmoid(-e . w_neg).
    With ``exact`` the full softmax over the vocabulary is used instead
    (meant for small vocabularies; the negatives are ignored).
    """
    value, _ = context_log_likelihood_grad(params, embedding, ctx_id, negative_ids, exact)
    return value


def context_log_likelihood_grad(params: ModelParams, embedding: np.ndarray, ctx_id: int,
                                negative_ids=(), exact: bool = False):
    """(log-likelihood, gradient with respect to the embedding)."""
    e = np.asarray(embedding, dtype=float)
    if e.shape != (params.m,):
        raise DimensionError(f"embedding shape {e.shape} != ({params.m},)")
    vocab = params.vocab_size
    if not 0 <= ctx_id < vocab:
        raise VocabularyError(f"context id {ctx_id} outside [0, {vocab})")
    w = params.ctx_weights
    if exact:
        scores = w @ e
        zmax = scores.max()
        logz = zmax + np.log(np.exp(scores - zmax).sum())
        probs = np.exp(scores - logz)
        value = float(scores[ctx_id] - logz)
        grad = w[ctx_id] - probs @ w
        return value, grad
    negs = np.asarray(list(negative_ids), dtype=np.int64)
    if negs.size and (negs.min() < 0 or negs.max() >= vocab):
        raise VocabularyError("negative id outside vocabulary")
    s_pos = float(w[ctx_id] @ e)
    value = float(log_sigmoid(s_pos))
    grad = sigmoid(-s_pos) * w[ctx_id]
    if negs.size:
        s_neg = w[negs] @ e
        value += float(log_sigmoid(-s_neg).sum())
        grad = grad - sigmoid(s_neg) @ w[negs]
    return value, grad


def temporal_term(emb_i: np.ndarray, emb_next: np.ndarray, f_ref: float,
                  f_next: float) -> float:
    """Per-example temporal loss given already-computed pieces.

    ``f_ref`` is the prediction at day i for uncensored examples and at the
    last uncensored day t_uv for censored ones. Exposed separately so the
    hinge semantics can be pinned down with injected values.
    """
    diff = np.asarray(emb_next, dtype=float) - np.asarray(emb_i, dtype=float)
    return float(np.linalg.norm(diff)) + max(float(f_ref) - float(f_next), 0.0)


# -- loss terms ----------------------------------------------------------------


def supervised_loss(params: ModelParams, examples) -> float:
    """Mean squared churn-prediction error over uncensored examples.

    Censored rows contribute nothing; an all-censored batch scores 0 (the
    labelled count is reported by total_loss_and_grads).
    """
    batch = as_batch(examples)
    loss, _, _ = _evaluate(params, batch, LossWeights(alpha=0, beta=0, gamma=0),
                           terms=("s",), want_grads=False)
    return loss


def unsupervised_loss(params: ModelParams, examples, exact: bool = False) -> float:
    """Negated log-likelihood summed over every attached context."""
    batch = as_batch(examples)
    weights = LossWeights(alpha=1.0, beta=0, gamma=0)
    _, comps, _ = _evaluate(params, batch, weights, terms=("u",), want_grads=False,
                            exact=exact)
    return comps["u"]


def temporal_loss(params: ModelParams, examples) -> float:
    """Embedding smoothness plus prediction-decay hinge over in_D examples."""
    batch = as_batch(examples)
    weights = LossWeights(alpha=0, beta=1.0, gamma=0)
    _, comps, _ = _evaluate(params, batch, weights, terms=("t",), want_grads=False)
    return comps["t"]


def regularization_loss(params: ModelParams, weights: LossWeights) -> float:
    """Squared-L2 penalty over both stacks and w_s; context rows excluded."""
    total = 0.0
    for w, b in zip(params.embed.weights, params.embed.biases):
        total += weights.lambda0 * float(np.sum(w * w))
        total += weights.lambda1 * float(np.sum(b * b))
    for w, b in zip(params.pred.weights, params.pred.biases):
        total += weights.lambda2 * float(np.sum(w * w))
        total += weights.lambda3 * float(np.sum(b * b))
    total += weights.lambda4 * float(np.sum(params.w_s * params.w_s))
    return total


def total_loss_and_grads(params: ModelParams, examples, weights: LossWeights,
                         terms=ALL_TERMS, exact: bool = False):
    """Objective value, exact parameter gradients, and per-term components.

    Returns (loss, grads, report) with grads aligned to params.flat().
    Terms whose trade-off weight is zero are skipped and reported as 0.
    """
    batch = as_batch(examples)
    return _evaluate(params, batch, weights, terms=terms, want_grads=True, exact=exact)


# -- shared evaluation engine -------------------------------------------------


def _evaluate(params: ModelParams, batch: Batch, weights: LossWeights, terms,
              want_grads: bool, exact: bool = False):
    do_s = "s" in terms
    do_u = "u" in terms and weights.alpha > 0 and batch.ctx_ids.size > 0
    do_t = "t" in terms and weights.beta > 0 and batch.next_rows.size > 0
    do_r = "r" in terms and weights.gamma > 0

    emb_a, cache_ea = netcore.forward(params.embed, batch.z)
    h_a, cache_pa = netcore.forward(params.pred, emb_a)
    s_a = h_a @ params.w_s
    f_a = sigmoid(s_a)

    need_b = do_t
    if need_b:
        emb_b, cache_eb = netcore.forward(params.embed, batch.z_next)
        h_b, cache_pb = netcore.forward(params.pred, emb_b)
        s_b = h_b @ params.w_s
        f_b = sigmoid(s_b)
        have_c = batch.z_tuv.shape[0] > 0
        if have_c:
            emb_c, cache_ec = netcore.forward(params.embed, batch.z_tuv)
            h_c, cache_pc = netcore.forward(params.pred, emb_c)
            s_c = h_c @ params.w_s
            f_c = sigmoid(s_c)

    ds_a = np.zeros(batch.n)
    demb_a = np.zeros_like(emb_a)

    # supervised: mean squared error over delta = 1 rows
    labeled = batch.delta == 1
    n_labeled = int(labeled.sum())
    loss_s = 0.0
    if do_s and n_labeled > 0:
        resid = np.where(labeled, batch.label - f_a, 0.0)
        loss_s = float(np.sum(resid * resid)) / n_labeled
        if want_grads:
            ds_a += np.where(labeled, (2.0 / n_labeled) * (f_a - batch.label), 0.0) \
                * f_a * (1.0 - f_a)

    # unsupervised: context inference
    loss_u = 0.0
    ctx_grad = None
    if do_u:
        ctx_grad = np.zeros_like(params.ctx_weights) if want_grads else None
        e_rows = emb_a[batch.ctx_example]
        if exact:
            scores = emb_a @ params.ctx_weights.T           # (n, vocab)
            zmax = scores.max(axis=1, keepdims=True)
            logz = (zmax + np.log(np.exp(scores - zmax).sum(axis=1, keepdims=True)))[:, 0]
            pos = np.einsum("ij,ij->i", e_rows, params.ctx_weights[batch.ctx_ids])
            loss_u = float(np.sum(logz[batch.ctx_example] - pos))
            if want_grads:
                probs = np.exp(scores - logz[:, None])
                counts = np.bincount(batch.ctx_example, minlength=batch.n).astype(float)
                demb_a += weights.alpha * (
                    (counts[:, None] * probs) @ params.ctx_weights
                )
                np.add.at(ctx_grad, batch.ctx_ids, -weights.alpha * e_rows)
                ctx_grad += weights.alpha * (probs * counts[:, None]).T @ emb_a
        else:
            w_pos = params.ctx_weights[batch.ctx_ids]
            s_pos = np.einsum("ij,ij->i", e_rows, w_pos)
            loss_u = float(-np.sum(log_sigmoid(s_pos)))
            if batch.neg_ids.size:
                w_neg = params.ctx_weights[batch.neg_ids]
                e_neg = emb_a[batch.ctx_example[batch.neg_ctx]]
                s_neg = np.einsum("ij,ij->i", e_neg, w_neg)
                loss_u += float(-np.sum(log_sigmoid(-s_neg)))
            if want_grads:
                coef_pos = -weights.alpha * sigmoid(-s_pos)
                np.add.at(demb_a, batch.ctx_example, coef_pos[:, None] * w_pos)
                np.add.at(ctx_grad, batch.ctx_ids, coef_pos[:, None] * e_rows)
                if batch.neg_ids.size:
                    coef_neg = weights.alpha * sigmoid(s_neg)
                    np.add.at(demb_a, batch.ctx_example[batch.neg_ctx],
                              coef_neg[:, None] * w_neg)
                    np.add.at(ctx_grad, batch.neg_ids, coef_neg[:, None] * e_neg)

    # temporal: smoothness + decay hinge
    loss_t = 0.0
    if do_t:
        rows = batch.next_rows
        diff = emb_b - emb_a[rows]
        norms = np.linalg.norm(diff, axis=1)
        loss_t += float(norms.sum())
        f_ref = np.where(batch.ref_is_current, f_a[rows], 0.0)
        s_ref_cens = None
        if batch.z_tuv.shape[0] > 0:
            cens = ~batch.ref_is_current
            f_ref = f_ref.copy()
            f_ref[cens] = f_c[batch.tuv_of_next[cens]]
        hinge_arg = f_ref - f_b
        active = hinge_arg > 0.0
        loss_t += float(hinge_arg[active].sum())
        if want_grads:
            ds_b = np.zeros(rows.size)
            demb_b = np.zeros_like(emb_b)
            safe = norms > 0.0
            unit = np.zeros_like(diff)
            unit[safe] = diff[safe] / norms[safe, None]
            demb_b += weights.beta * unit
            np.add.at(demb_a, rows, -weights.beta * unit)
            ds_b -= weights.beta * np.where(active, f_b * (1.0 - f_b), 0.0)
            cur_ref = active & batch.ref_is_current
            sig_prime_a = f_a[rows] * (1.0 - f_a[rows])
            np.add.at(ds_a, rows[cur_ref], weights.beta * sig_prime_a[cur_ref])
            if batch.z_tuv.shape[0] > 0:
                ds_c = np.zeros(batch.z_tuv.shape[0])
                cens_ref = active & ~batch.ref_is_current
                np.add.at(ds_c, batch.tuv_of_next[cens_ref],
                          weights.beta * (f_c * (1.0 - f_c))[batch.tuv_of_next[cens_ref]])

    # regularization
    loss_r = regularization_loss(params, weights) if do_r else 0.0

    total = loss_s + weights.alpha * loss_u + weights.beta * loss_t + weights.gamma * loss_r
    if not np.isfinite(total):
        raise DivergenceError(f"non-finite loss (s={loss_s}, u={loss_u}, t={loss_t}, r={loss_r})")
    report = {"total": total, "s": loss_s, "u": loss_u, "t": loss_t, "r": loss_r,
              "n_labeled": n_labeled}
    if not want_grads:
        return total, report, None

    # backward through prediction and embedding stacks, pass by pass
    n_embed = 2 * params.embed.n_layers
    n_pred = 2 * params.pred.n_layers
    embed_grads = [np.zeros_like(a) for a in params.embed.params()]
    pred_grads = [np.zeros_like(a) for a in params.pred.params()]
    dw_s = np.zeros_like(params.w_s)

    def back_through(ds, h, cache_p, cache_e, demb_extra):
        nonlocal dw_s
        dh = ds[:, None] * params.w_s[None, :]
        dw_s += h.T @ ds
        pg, demb = netcore.backward(params.pred, cache_p, dh)
        for i in range(n_pred):
            pred_grads[i] += pg[i]
        eg, _ = netcore.backward(params.embed, cache_e, demb + demb_extra)
        for i in range(n_embed):
            embed_grads[i] += eg[i]

    back_through(ds_a, h_a, cache_pa, cache_ea, demb_a)
    if do_t:
        back_through(ds_b, h_b, cache_pb, cache_eb, demb_b)
        if batch.z_tuv.shape[0] > 0:
            back_through(ds_c, h_c, cache_pc, cache_ec, np.zeros_like(emb_c))

    if do_r:
        g2 = weights.gamma * 2.0
        for i, w in enumerate(params.embed.weights):
            embed_grads[2 * i] += g2 * weights.lambda0 * w
        for i, b in enumerate(params.embed.biases):
            embed_grads[2 * i + 1] += g2 * weights.lambda1 * b
        for i, w in enumerate(params.pred.weights):
            pred_grads[2 * i] += g2 * weights.lambda2 * w
        for i, b in enumerate(params.pred.biases):
            pred_grads[2 * i + 1] += g2 * weights.lambda3 * b
        dw_s += g2 * weights.lambda4 * params.w_s

    if ctx_grad is None:
        ctx_grad = np.zeros_like(params.ctx_weights)
    grads = embed_grads + pred_grads + [dw_s, ctx_grad]
    return total, report, grads


# -- checkpointing --------------------------------------------------------------


def save_model(path, params: ModelParams) -> None:
    meta = {
        "l_p": params.embed.n_layers,
        "l_n": params.pred.n_layers,
        "dims": {
            "d": params.d,
            "m": params.m,
            "pred_width": params.pred.out_dim,
            "vocab": params.vocab_size,
        },
    }
    arrays: dict[str, np.ndarray] = {}
    for i, (w, b) in enumerate(zip(params.embed.weights, params.embed.biases)):
        arrays[f"embed_w{i}"] = w
        arrays[f"embed_b{i}"] = b
    for i, (w, b) in enumerate(zip(params.pred.weights, params.pred.biases)):
        arrays[f"pred_w{i}"] = w
        arrays[f"pred_b{i}"] = b
    arrays["w_s"] = params.w_s
    arrays["ctx_weights"] = params.ctx_weights
    netcore.save_checkpoint(path, meta, arrays)


def load_model(path) -> ModelParams:
    meta, arrays = netcore.load_checkpoint(path)
    l_p, l_n = meta["l_p"], meta["l_n"]
    embed = DenseStack(
        [arrays[f"embed_w{i}"] for i in range(l_p)],
        [arrays[f"embed_b{i}"] for i in range(l_p)],
    )
    pred = DenseStack(
        [arrays[f"pred_w{i}"] for i in range(l_n)],
        [arrays[f"pred_b{i}"] for i in range(l_n)],
    )
    return ModelParams(embed, pred, arrays["w_s"], arrays["ctx_weights"])
