"""Teacher-student semi-supervised training loop.

Per step: a gold batch and an unlabeled batch are drawn; the unlabeled batch
is augmented by embedding-neighbor word substitution; the teacher is trained
on supervised cross entropy plus a confidence-thresholded consistency loss,
and on a first-order feedback term that rewards pseudo-labels which improved
the student's gold loss after the student's update step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .classifier import (
    AdamWState,
    MlpParams,
    adamw_step,
    batch_backward,
    forward,
    smoothed_target,
)
from .corpus import Document, SplitSet
from .encoder import Embeddings, embed_batch
from .seeding import derive_seed, rng_for


@dataclass
class TrainerConfig:
    temperature: float = 0.5
    conf_threshold: float = 0.9
    lambda_u_ramp_steps: int = 6000
    max_steps: int = 7000
    warmup_steps: int = 50
    eval_every: int = 500
    early_stop_delta: float = 0.005
    early_stop_patience: int = 4
    batch_gold: int = 4
    batch_unlabeled: int = 8  # 0 disables the unlabeled/student path entirely
    lr_encoder: float = 1e-3
    lr_head: float = 1e-3
    smoothing: float = 0.15
    finetune_lr: float = 1e-3
    finetune_epochs: int = 10
    finetune_batch: int = 32
    augment_prob: float = 0.9
    augment_k: int = 5
    hidden: int = 32
    train_embeddings: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if not (0.0 < self.conf_threshold <= 1.0):
            raise ValueError("conf_threshold must be in (0, 1]")
        if self.batch_gold < 1:
            raise ValueError("batch_gold must be >= 1")
        if self.batch_unlabeled < 0 or (
            self.batch_unlabeled and self.batch_unlabeled % self.batch_gold != 0
        ):
            raise ValueError("batch_unlabeled must be 0 or a positive multiple of batch_gold")
        if not (0.0 <= self.smoothing < 1.0):
            raise ValueError("smoothing must be in [0, 1)")
        if not (0.0 <= self.augment_prob <= 1.0):
            raise ValueError("augment_prob must be in [0, 1]")


@dataclass(eq=False)
class Classifier:
    """Document classifier: an embedding table plus an MLP head."""

    emb: Embeddings
    head: MlpParams
    opt_head: AdamWState | None = None
    opt_emb: AdamWState | None = None

    def snapshot(self, copy_emb: bool = False) -> "Classifier":
        return Classifier(
            emb=self.emb.copy() if copy_emb else self.emb,
            head=self.head.copy(),
            opt_head=self.opt_head.copy() if self.opt_head else None,
            opt_emb=self.opt_emb.copy() if self.opt_emb else None,
        )


@dataclass(eq=False)
class MplState:
    teacher: Classifier
    student: Classifier
    step: int = 0
    best_dev: float = float("-inf")
    lambda_u: float = 0.0


@dataclass(frozen=True)
class PseudoBatch:
    """The batch the student just trained on: augmented inputs, the
    unlabeled documents they came from, and the hard pseudo-labels."""

    augmented: tuple[Document, ...]
    unlabeled: tuple[Document, ...]
    labels: np.ndarray


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    per_class: dict[int, float]
    n: int


def sharpen(l: np.ndarray, t: float) -> np.ndarray:
    """Componentwise t-th root, renormalized to unit l1 norm."""
    if t <= 0:
        raise ValueError("temperature must be positive")
    powered = np.asarray(l, dtype=float) ** (1.0 / t)
    return powered / powered.sum(axis=-1, keepdims=True)


def hard_label(l: np.ndarray) -> int:
    """Argmax index; ties go to the smallest index."""
    if len(l) == 0:
        raise ValueError("empty label vector")
    return int(np.argmax(l))


def lambda_u_schedule(step: int, ramp_steps: int) -> float:
    """Linear ramp from 0 to 1 over ramp_steps, then clamped at 1."""
    if ramp_steps <= 0:
        return 1.0
    return min(1.0, step / ramp_steps)


def nearest_neighbors(emb: Embeddings, k: int) -> np.ndarray:
    """V x k table of cosine-nearest vocabulary neighbors, self excluded."""
    n = emb.E.shape[0]
    k = min(k, n - 1)
    norms = np.linalg.norm(emb.E, axis=1, keepdims=True)
    unit = emb.E / np.maximum(norms, 1e-12)
    sims = unit @ unit.T
    np.fill_diagonal(sims, -np.inf)
    order = np.argsort(-sims, axis=1, kind="stable")
    return order[:, :k]


def augment(
    doc: Document,
    emb: Embeddings,
    prob: float,
    k: int,
    seed: int,
    neighbors: np.ndarray | None = None,
) -> Document:
    """Each token independently, with the given probability, is replaced by
    a uniform draw from its k nearest embedding neighbors (self excluded).

    A precomputed neighbor table may be passed to avoid recomputing it.
    """
    if not (0.0 <= prob <= 1.0):
        raise ValueError("prob must be in [0, 1]")
    if neighbors is None:
        neighbors = nearest_neighbors(emb, k)
    k_eff = neighbors.shape[1]
    rng = np.random.default_rng(seed)
    tokens = []
    for t in doc.tokens:
        if rng.random() < prob:
            tokens.append(int(neighbors[t, rng.integers(k_eff)]))
        else:
            tokens.append(t)
    return Document(doc.id, tuple(tokens), doc.label)


def init_state(emb: Embeddings, n_classes: int, cfg: TrainerConfig) -> MplState:
    """Teacher and student start from copies of the pre-trained embeddings
    with independently initialized heads."""

    def make(which: str) -> Classifier:
        head = MlpParams.init(rng_for(cfg.seed, f"{which}-head"), emb.dim, cfg.hidden, n_classes)
        opt_head = AdamWState.init(head.to_dict())
        clf = Classifier(emb=emb.copy(), head=head, opt_head=opt_head)
        if cfg.train_embeddings:
            clf.opt_emb = AdamWState.init({"E": clf.emb.E}, weight_decay=0.0)
        return clf

    return MplState(teacher=make("teacher"), student=make("student"))


def predict_probs(clf: Classifier, docs: Sequence[Document]) -> np.ndarray:
    return forward(clf.head, embed_batch(docs, clf.emb))


def _gold_targets(labels: np.ndarray, n_classes: int, smoothing: float) -> np.ndarray:
    return np.stack([smoothed_target(int(y), n_classes, smoothing) for y in labels])


def _consistency_parts(
    head: MlpParams, x_unlabeled: np.ndarray, cfg: TrainerConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Teacher soft predictions, the confidence-kept mask, and the sharpened
    consistency targets for an unlabeled batch."""
    soft = forward(head, x_unlabeled)
    kept = soft.max(axis=1) > cfg.conf_threshold
    targets = sharpen(soft, cfg.temperature)
    return soft, kept, targets


def teacher_losses(
    state: MplState,
    gold_batch: Sequence[Document],
    unlabeled_batch: Sequence[Document],
    augmented_batch: Sequence[Document],
    cfg: TrainerConfig,
) -> tuple[float, float, dict]:
    """Supervised and consistency loss values for one step.

    The consistency loss is averaged over the full unlabeled batch size;
    items below the confidence threshold contribute zero.
    """
    teacher = state.teacher
    n_classes = teacher.head.b2.shape[0]
    x_gold = embed_batch(gold_batch, teacher.emb)
    y_gold = np.array([d.label for d in gold_batch])
    loss_sup, _, _ = batch_backward(
        teacher.head, x_gold, _gold_targets(y_gold, n_classes, cfg.smoothing)
    )
    x_u = embed_batch(unlabeled_batch, teacher.emb)
    x_a = embed_batch(augmented_batch, teacher.emb)
    soft_u, kept, targets = _consistency_parts(teacher.head, x_u, cfg)
    weights = kept.astype(float) / len(unlabeled_batch)
    loss_cons, _, _ = batch_backward(teacher.head, x_a, targets, weights=weights)
    diagnostics = {
        "kept_frac": float(kept.mean()),
        "soft_unlabeled": soft_u,
        "pseudo_labels": soft_u.argmax(axis=1),
    }
    return loss_sup, loss_cons, diagnostics


def _input_grads_to_embedding(docs, dx: np.ndarray, shape) -> np.ndarray:
    """Push batch input gradients back onto the mean-pooled embedding rows."""
    d_e = np.zeros(shape)
    for row, doc in zip(dx, docs):
        d_e[list(doc.tokens)] += row / len(doc.tokens)
    return d_e


def student_step(
    state: MplState,
    augmented_batch: Sequence[Document],
    teacher_soft_labels: np.ndarray,
    cfg: TrainerConfig,
    lr: float | None = None,
) -> tuple[Classifier, float]:
    """One AdamW step of the student on smoothed cross entropy against the
    hard pseudo-labels of the aligned unlabeled items.

    With train_embeddings set, the student's embedding table takes a step
    too, at lr_encoder scaled by the same warmup factor as the head."""
    student = state.student
    n_classes = student.head.b2.shape[0]
    pseudo = np.array([hard_label(row) for row in teacher_soft_labels])
    x_a = embed_batch(augmented_batch, student.emb)
    qs = _gold_targets(pseudo, n_classes, cfg.smoothing)
    loss, grads, dx = batch_backward(student.head, x_a, qs)
    lr = cfg.lr_head if lr is None else lr
    adamw_step(student.head.to_dict(), grads, student.opt_head, lr)
    if cfg.train_embeddings:
        d_e = _input_grads_to_embedding(augmented_batch, dx, student.emb.E.shape)
        adamw_step(
            {"E": student.emb.E}, {"E": d_e}, student.opt_emb,
            cfg.lr_encoder * (lr / cfg.lr_head),
        )
    return student, loss


def _dot_grads(a: dict[str, np.ndarray], b: dict[str, np.ndarray]) -> float:
    return float(sum((a[k] * b[k]).sum() for k in a))


def mpl_teacher_grad(
    state_before: MplState,
    state_after: MplState,
    gold_batch: Sequence[Document],
    pseudo_batch: PseudoBatch,
    cfg: TrainerConfig,
    lr: float | None = None,
) -> tuple[dict[str, np.ndarray], float, float]:
    """First-order teacher feedback from the student's update.

    h is the student step size times the dot product, over all student
    parameters, of the post-update gold-loss gradient with the pre-update
    pseudo-loss gradient; the returned gradient is h times the gradient of
    the teacher's cross entropy against its own hard pseudo-labels on the
    unlabeled batch. Returns (teacher gradient, h, h * teacher CE).
    """
    lr = cfg.lr_head if lr is None else lr
    student_before = state_before.student
    student_after = state_after.student
    n_classes = student_before.head.b2.shape[0]

    x_a = embed_batch(pseudo_batch.augmented, student_before.emb)
    qs_pseudo = _gold_targets(pseudo_batch.labels, n_classes, cfg.smoothing)
    _, g_pseudo, dx_pseudo = batch_backward(student_before.head, x_a, qs_pseudo)

    x_gold = embed_batch(gold_batch, student_after.emb)
    y_gold = np.array([d.label for d in gold_batch])
    qs_gold = _gold_targets(y_gold, n_classes, cfg.smoothing)
    _, g_gold, dx_gold = batch_backward(student_after.head, x_gold, qs_gold)

    h = lr * _dot_grads(g_gold, g_pseudo)
    if cfg.train_embeddings:
        shape = student_before.emb.E.shape
        de_pseudo = _input_grads_to_embedding(pseudo_batch.augmented, dx_pseudo, shape)
        de_gold = _input_grads_to_embedding(gold_batch, dx_gold, shape)
        h += cfg.lr_encoder * (lr / cfg.lr_head) * float((de_gold * de_pseudo).sum())

    teacher = state_before.teacher
    x_u = embed_batch(pseudo_batch.unlabeled, teacher.emb)
    onehot = np.eye(n_classes)[pseudo_batch.labels]
    ce_value, g_teacher, dx_u = batch_backward(teacher.head, x_u, onehot)
    grads = {k: h * g for k, g in g_teacher.items()}
    if cfg.train_embeddings:
        grads["E"] = h * _input_grads_to_embedding(
            pseudo_batch.unlabeled, dx_u, teacher.emb.E.shape
        )
    return grads, h, h * ce_value


def evaluate(model: Classifier, dataset: Sequence[Document]) -> EvalResult:
    """Accuracy and per-class accuracy under argmax predictions."""
    if not dataset:
        raise ValueError("cannot evaluate on an empty dataset")
    if any(d.label is None for d in dataset):
        raise ValueError("evaluation dataset must be labeled")
    probs = predict_probs(model, dataset)
    preds = probs.argmax(axis=1)
    labels = np.array([d.label for d in dataset])
    per_class: dict[int, float] = {}
    for c in sorted(set(int(y) for y in labels)):
        mask = labels == c
        per_class[c] = float((preds[mask] == c).mean())
    return EvalResult(float((preds == labels).mean()), per_class, len(dataset))


def _empty_grads(params: MlpParams) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.to_dict().items()}


@dataclass(eq=False)
class TrainResult:
    teacher: Classifier
    student: Classifier
    history: list[dict]


def train(splits: SplitSet, emb: Embeddings, cfg: TrainerConfig) -> TrainResult:
    """Run the full teacher-student loop and return the best-dev student.

    With batch_unlabeled=0 the unlabeled, consistency, student, and feedback
    paths are all disabled and the loop degenerates to supervised training
    of the teacher.
    """
    if not splits.gold:
        raise ValueError("gold split is empty")
    if not splits.dev:
        raise ValueError("dev split is empty")
    if cfg.batch_unlabeled > 0 and not splits.unlabeled:
        raise ValueError("unlabeled split is empty")
    n_classes = max(d.label for d in splits.gold) + 1
    state = init_state(emb, n_classes, cfg)
    neighbors = nearest_neighbors(emb, cfg.augment_k) if cfg.batch_unlabeled else None

    history: list[dict] = []
    best_student: Classifier | None = None
    best_stop = float("-inf")
    bad_evals = 0
    last_eval_step = -1

    for s in range(cfg.max_steps):
        lam = lambda_u_schedule(s, cfg.lambda_u_ramp_steps)
        warm = min(1.0, (s + 1) / cfg.warmup_steps) if cfg.warmup_steps > 0 else 1.0
        lr_head = cfg.lr_head * warm

        g_idx = rng_for(cfg.seed, "gold-batch", s).integers(0, len(splits.gold), cfg.batch_gold)
        gold_batch = tuple(splits.gold[i] for i in g_idx)
        x_gold = embed_batch(gold_batch, state.teacher.emb)
        y_gold = np.array([d.label for d in gold_batch])
        loss_sup, g_sup, dx_gold = batch_backward(
            state.teacher.head, x_gold, _gold_targets(y_gold, n_classes, cfg.smoothing)
        )
        e_shape = state.teacher.emb.E.shape
        e_total = (
            _input_grads_to_embedding(gold_batch, dx_gold, e_shape)
            if cfg.train_embeddings
            else None
        )

        loss_cons = 0.0
        loss_mpl = 0.0
        kept_frac = 0.0
        g_cons = _empty_grads(state.teacher.head)
        g_mpl = _empty_grads(state.teacher.head)
        if cfg.batch_unlabeled:
            u_idx = rng_for(cfg.seed, "unlabeled-batch", s).integers(
                0, len(splits.unlabeled), cfg.batch_unlabeled
            )
            unlabeled_batch = tuple(splits.unlabeled[i] for i in u_idx)
            augmented_batch = tuple(
                augment(
                    doc, emb, cfg.augment_prob, cfg.augment_k,
                    derive_seed(cfg.seed, "augment", s, i), neighbors,
                )
                for i, doc in enumerate(unlabeled_batch)
            )
            x_u = embed_batch(unlabeled_batch, state.teacher.emb)
            x_a = embed_batch(augmented_batch, state.teacher.emb)
            soft_u, kept, targets = _consistency_parts(state.teacher.head, x_u, cfg)
            kept_frac = float(kept.mean())
            weights = kept.astype(float) / cfg.batch_unlabeled
            loss_cons, g_cons, dx_a = batch_backward(
                state.teacher.head, x_a, targets, weights=weights
            )
            if e_total is not None:
                e_total += lam * _input_grads_to_embedding(augmented_batch, dx_a, e_shape)

            before = MplState(
                teacher=state.teacher,
                student=state.student.snapshot(copy_emb=cfg.train_embeddings),
                step=state.step,
            )
            student_step(state, augmented_batch, soft_u, cfg, lr=lr_head)
            pseudo = soft_u.argmax(axis=1)
            g_mpl, _, loss_mpl = mpl_teacher_grad(
                before, state, gold_batch,
                PseudoBatch(augmented_batch, unlabeled_batch, pseudo),
                cfg, lr=lr_head,
            )
            if e_total is not None:
                e_total += g_mpl.pop("E")

        total = {k: g_sup[k] + lam * g_cons[k] + g_mpl[k] for k in g_sup}
        adamw_step(state.teacher.head.to_dict(), total, state.teacher.opt_head, lr_head)
        if e_total is not None:
            adamw_step(
                {"E": state.teacher.emb.E}, {"E": e_total}, state.teacher.opt_emb,
                cfg.lr_encoder * warm,
            )
        state.lambda_u = lam
        state.step = s + 1

        row = {
            "step": s,
            "loss_sup": loss_sup,
            "loss_cons": loss_cons,
            "loss_mpl": loss_mpl,
            "lambda_u": lam,
            "kept_frac": kept_frac,
            "dev_acc": math.nan,
        }

        if (s + 1) % cfg.eval_every == 0:
            eval_model = state.student if cfg.batch_unlabeled else state.teacher
            acc = evaluate(eval_model, splits.dev).accuracy
            row["dev_acc"] = acc
            last_eval_step = s
            if acc > state.best_dev:
                state.best_dev = acc
                best_student = eval_model.snapshot(copy_emb=cfg.train_embeddings)
            if acc > best_stop + cfg.early_stop_delta:
                best_stop = acc
                bad_evals = 0
            else:
                bad_evals += 1
            history.append(row)
            if bad_evals >= cfg.early_stop_patience:
                break
        else:
            history.append(row)

    if last_eval_step < state.step - 1 or best_student is None:
        eval_model = state.student if cfg.batch_unlabeled else state.teacher
        acc = evaluate(eval_model, splits.dev).accuracy
        history.append(
            {
                "step": state.step - 1,
                "loss_sup": math.nan,
                "loss_cons": math.nan,
                "loss_mpl": math.nan,
                "lambda_u": state.lambda_u,
                "kept_frac": math.nan,
                "dev_acc": acc,
            }
        )
        if acc > state.best_dev or best_student is None:
            state.best_dev = acc
            best_student = eval_model.snapshot(copy_emb=cfg.train_embeddings)

    return TrainResult(teacher=state.teacher, student=best_student, history=history)


@dataclass(eq=False)
class SupervisedResult:
    final: Classifier
    best: Classifier
    history: list[dict]


def train_supervised(
    gold: Sequence[Document], dev: Sequence[Document], emb: Embeddings, cfg: TrainerConfig
) -> SupervisedResult:
    """Gold-only baseline with the same batch schedule, warmup, optimizer,
    evaluation cadence, and early stopping as the teacher path."""
    if not gold:
        raise ValueError("gold set is empty")
    if not dev:
        raise ValueError("dev set is empty")
    n_classes = max(d.label for d in gold) + 1
    head = MlpParams.init(rng_for(cfg.seed, "teacher-head"), emb.dim, cfg.hidden, n_classes)
    clf = Classifier(emb=emb.copy(), head=head, opt_head=AdamWState.init(head.to_dict()))
    if cfg.train_embeddings:
        clf.opt_emb = AdamWState.init({"E": clf.emb.E}, weight_decay=0.0)

    history: list[dict] = []
    best: Classifier | None = None
    best_acc = float("-inf")
    best_stop = float("-inf")
    bad_evals = 0
    for s in range(cfg.max_steps):
        warm = min(1.0, (s + 1) / cfg.warmup_steps) if cfg.warmup_steps > 0 else 1.0
        g_idx = rng_for(cfg.seed, "gold-batch", s).integers(0, len(gold), cfg.batch_gold)
        batch = tuple(gold[i] for i in g_idx)
        xs = embed_batch(batch, clf.emb)
        ys = np.array([d.label for d in batch])
        loss, grads, dxs = batch_backward(clf.head, xs, _gold_targets(ys, n_classes, cfg.smoothing))
        adamw_step(clf.head.to_dict(), grads, clf.opt_head, cfg.lr_head * warm)
        if cfg.train_embeddings:
            d_e = _input_grads_to_embedding(batch, dxs, clf.emb.E.shape)
            adamw_step({"E": clf.emb.E}, {"E": d_e}, clf.opt_emb, cfg.lr_encoder * warm)
        row = {"step": s, "loss_sup": loss, "dev_acc": math.nan}
        if (s + 1) % cfg.eval_every == 0:
            acc = evaluate(clf, dev).accuracy
            row["dev_acc"] = acc
            if acc > best_acc:
                best_acc = acc
                best = clf.snapshot(copy_emb=cfg.train_embeddings)
            if acc > best_stop + cfg.early_stop_delta:
                best_stop = acc
                bad_evals = 0
            else:
                bad_evals += 1
            history.append(row)
            if bad_evals >= cfg.early_stop_patience:
                break
        else:
            history.append(row)
    if best is None:
        best = clf.snapshot(copy_emb=cfg.train_embeddings)
    return SupervisedResult(final=clf, best=best, history=history)


def finetune_student(student: Classifier, gold: Sequence[Document], cfg: TrainerConfig) -> Classifier:
    """Final supervised pass over the gold set: fixed learning rate, fresh
    optimizer moments, shuffled minibatches, smoothed cross entropy."""
    if not gold:
        raise ValueError("gold set is empty")
    if cfg.finetune_epochs == 0:
        return student
    n_classes = student.head.b2.shape[0]
    opt = AdamWState.init(student.head.to_dict())
    opt_emb = (
        AdamWState.init({"E": student.emb.E}, weight_decay=0.0)
        if cfg.train_embeddings
        else None
    )
    for epoch in range(cfg.finetune_epochs):
        order = rng_for(cfg.seed, "finetune", epoch).permutation(len(gold))
        for start in range(0, len(gold), cfg.finetune_batch):
            batch = [gold[i] for i in order[start : start + cfg.finetune_batch]]
            xs = embed_batch(batch, student.emb)
            ys = np.array([d.label for d in batch])
            _, grads, dxs = batch_backward(
                student.head, xs, _gold_targets(ys, n_classes, cfg.smoothing)
            )
            adamw_step(student.head.to_dict(), grads, opt, cfg.finetune_lr)
            if opt_emb is not None:
                d_e = _input_grads_to_embedding(batch, dxs, student.emb.E.shape)
                adamw_step({"E": student.emb.E}, {"E": d_e}, opt_emb, cfg.lr_encoder)
    return student


HISTORY_COLUMNS = ("step", "loss_sup", "loss_cons", "loss_mpl", "lambda_u", "kept_frac", "dev_acc")


def write_history(path: str | Path, history: list[dict]) -> None:
    """Training history CSV; dev accuracy cells are blank on non-eval steps."""
    lines = [",".join(HISTORY_COLUMNS)]
    for row in history:
        cells = []
        for col in HISTORY_COLUMNS:
            val = row.get(col, math.nan)
            if isinstance(val, float) and math.isnan(val):
                cells.append("")
            else:
                cells.append(repr(val) if isinstance(val, float) else str(val))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
