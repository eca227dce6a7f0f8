"""Training pipeline, out-of-sample embedding and the on-disk model archive.

``train`` runs one of four methods over a list of equally sized images:

* ``llise``  - block-wise, SSIM-distance reconstruction and embedding
* ``kllise`` - the same in a kernel feature space
* ``lle``    - closed-form LLE on whole image vectors
* ``klle``   - kernel LLE on whole image vectors

The archive is a single JSON document; matrices are base64 strings of
little-endian 8-byte payloads, and keys are sorted so identical runs write
identical bytes.
"""

import base64
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import kernels as kern
from .image_blocks import InvalidParameterError, center_blocks, partition, raw_blocks
from .lle_baseline import klle_weights, lle_embed, lle_weights, weight_matrix
from .llise_embed import solve_embedding_batch
from .llise_reconstruct import (
    AdmmConfig,
    solve_weights_batch,
    solve_weights_kernel_batch,
)
from .neighbor_graph import knn_euclidean, knn_kernel, knn_oos
from .ssim import SsimConstants

log = logging.getLogger("ssimm")

METHODS = ("llise", "kllise", "lle", "klle")
ARCHIVE_FORMAT = "ssimm-model/1"


@dataclass(frozen=True)
class ExperimentConfig:
    method: str = "llise"
    kernel: str = "rbf"
    q: int = 64
    p: int = 4
    k: int = 10
    recon_rho: float = None  # None -> method default
    recon_eta: float = None
    recon_max_iter: int = 2000
    recon_tol: float = 1e-6
    embed_rho: float = 0.01
    embed_eta: float = 0.01
    embed_max_iter: int = 5000
    embed_tol: float = 1e-5
    seed: int = 0
    normalize: bool = True  # kernel methods: cosine-normalise the gram
    center: bool = True  # kernel methods: double-centre the gram
    exact_fit: bool = True  # exact-copy neighbours get one-hot weights directly

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidParameterError(f"unknown method {self.method!r}; pick one of {METHODS}")
        kern.KernelKind(self.kernel)
        if self.q < 2 or self.p < 1 or self.k < 1:
            raise InvalidParameterError("q >= 2, p >= 1 and k >= 1 are required")
        if self.method in ("llise", "kllise") and self.p > self.q:
            raise InvalidParameterError(f"p={self.p} cannot exceed the block length q={self.q}")
        if self.recon_rho is None:
            object.__setattr__(self, "recon_rho", 0.01 if self.method == "kllise" else 0.1)
        if self.recon_eta is None:
            object.__setattr__(self, "recon_eta", 0.1)

    @property
    def blockwise(self):
        return self.method in ("llise", "kllise")

    @property
    def kernelized(self):
        return self.method in ("kllise", "klle")

    def recon_config(self):
        return AdmmConfig(self.recon_rho, self.recon_eta, self.recon_max_iter, self.recon_tol,
                          self.seed, self.exact_fit)

    def embed_config(self):
        return AdmmConfig(self.embed_rho, self.embed_eta, self.embed_max_iter, self.embed_tol, self.seed)

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class TrainedModel:
    """Everything needed to embed new images next to the training set.

    Arrays are indexed ``[block, image, ...]``. For the whole-image methods
    there is a single "block" spanning the image.
    """

    config: ExperimentConfig
    names: list
    labels: np.ndarray  # (n,) int, -1 when unknown
    width: int
    height: int
    block_len: int
    features: np.ndarray  # (b, n, q) what k-NN and kernels see
    neighbors: np.ndarray  # (b, n, k) int
    weights: np.ndarray  # (b, n, k)
    embeddings: np.ndarray  # (b, n, p)
    recon_converged: np.ndarray = field(default=None)  # (b, n) bool
    embed_converged: np.ndarray = field(default=None)  # (b,) bool
    embed_iterations: np.ndarray = field(default=None)  # (b,) int
    raw_diag: np.ndarray = field(default=None)  # (b, n) kernel stats
    col_means: np.ndarray = field(default=None)  # (b, n)
    grand_mean: np.ndarray = field(default=None)  # (b,)

    @property
    def n(self):
        return self.features.shape[1]

    @property
    def n_blocks(self):
        return self.features.shape[0]

    @property
    def c(self):
        return SsimConstants(self.block_len).c

    def kernel(self):
        return kern.Kernel.for_block_length(self.config.kernel, self.block_len)

    def gram_stats(self, i):
        return kern.KernelGram(
            K=None,
            normalized=self.config.normalize,
            centered=self.config.center,
            raw_diag=self.raw_diag[i],
            col_means=self.col_means[i],
            grand_mean=float(self.grand_mean[i]),
        )


# ---------------------------------------------------------------------------
# features
# ---------------------------------------------------------------------------


def _check_images(images):
    if not images:
        raise InvalidParameterError("no images given")
    w, h = images[0].width, images[0].height
    if any((im.width, im.height) != (w, h) for im in images):
        raise InvalidParameterError("all images must share one size")
    return w, h


def image_features(images, config, block_len=None):
    """``(b, n, q)`` feature stack for ``images`` under ``config``.

    LLISE works on mean-removed blocks; the kernel variant evaluates its
    kernel on the raw blocks (the gram is centred in feature space instead).
    Whole-image methods see each image as one raw vector.
    """
    if not config.blockwise:
        return np.stack([im.pixels.astype(np.float64) for im in images])[None]
    q = block_len or config.q
    part = partition(images[0], q)
    if config.method == "llise":
        per = [center_blocks(im, part).blocks for im in images]
    else:
        per = [raw_blocks(im, part) for im in images]
    return np.ascontiguousarray(np.stack(per, axis=1))


def _gather(F, nbr):
    """``X[i, j] = F[i, nbr[i, j]].T`` -> (b, n, q, k)."""
    b = F.shape[0]
    X = F[np.arange(b)[:, None, None], nbr]  # (b, n, k, q)
    return np.ascontiguousarray(np.swapaxes(X, 2, 3))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def train(images, config, names=None, labels=None):
    """Fit ``config.method`` to ``images`` and return a :class:`TrainedModel`."""
    width, height = _check_images(images)
    n = len(images)
    if config.k >= n:
        raise InvalidParameterError(f"k={config.k} must be smaller than the number of images n={n}")
    if config.p >= n:
        raise InvalidParameterError(f"p={config.p} must be smaller than n={n}")
    names = list(names) if names is not None else [f"img{i:03d}" for i in range(n)]
    labels = np.asarray(labels if labels is not None else [-1] * n, dtype=np.int64)
    q = config.q if config.blockwise else width * height
    if config.blockwise and q > width * height:
        raise InvalidParameterError(f"q={q} exceeds the image size {width * height}")
    F = image_features(images, config, q)
    b = F.shape[0]
    c = SsimConstants(q).c
    log.info("train %s: n=%d blocks=%d q=%d k=%d p=%d", config.method, n, b, q, config.k, config.p)

    extra = {}
    if config.kernelized:
        kernel = kern.Kernel.for_block_length(config.kernel, q)
        grams = []
        for i in range(b):
            g = kern.normalize_center(
                kernel.gram(F[i]),
                normalize=config.normalize and config.method == "kllise",
                center=config.center and config.method == "kllise",
            )
            grams.append(g)
        nbr = np.stack([knn_kernel(g, config.k).neighbors for g in grams])
        Ks = np.stack([g.K for g in grams])
        extra = dict(
            raw_diag=np.stack([g.raw_diag for g in grams]),
            col_means=np.stack([g.col_means for g in grams]),
            grand_mean=np.array([g.grand_mean for g in grams]),
        )
    else:
        nbr = np.stack([knn_euclidean(F[i], config.k).neighbors for i in range(b)])

    if config.method == "llise":
        X = _gather(F, nbr).reshape(b * n, q, config.k)
        res = solve_weights_batch(F.reshape(b * n, q), X, c, config.recon_config())
    elif config.method == "kllise":
        bi = np.arange(b)[:, None, None]
        kxx = np.einsum("bii->bi", Ks).reshape(-1)
        kvec = Ks[bi, nbr, np.arange(n)[None, :, None]].reshape(b * n, config.k)
        Kmat = Ks[bi[..., None], nbr[..., :, None], nbr[..., None, :]]
        res = solve_weights_kernel_batch(kxx, kvec, Kmat.reshape(b * n, config.k, config.k),
                                         c, config.recon_config())
    else:
        res = None

    if res is not None:
        W = np.stack([r.w for r in res]).reshape(b, n, config.k)
        recon_conv = np.array([r.converged for r in res]).reshape(b, n)
        log.info("reconstruction: %d/%d problems converged", int(recon_conv.sum()), recon_conv.size)
        emb = solve_embedding_batch(nbr, W, config.p, c, config.embed_config(), range(b))
        Y = np.stack([e.Y for e in emb])
        emb_conv = np.array([e.converged for e in emb])
        emb_iters = np.array([e.iterations_run for e in emb], dtype=np.int64)
        log.info("embedding: %d/%d blocks converged", int(emb_conv.sum()), b)
    else:
        Wl = []
        for j in range(n):
            nb = nbr[0, j]
            if config.method == "lle":
                Wl.append(lle_weights(F[0, j], F[0, nb].T).w)
            else:
                Wl.append(klle_weights(Ks[0, j, j], Ks[0, nb, j], Ks[0][np.ix_(nb, nb)]).w)
        W = np.stack(Wl)[None]
        Y = lle_embed(weight_matrix(nbr[0], W[0], n), config.p).Y[None]
        recon_conv = np.ones((1, n), dtype=bool)
        emb_conv = np.ones(1, dtype=bool)
        emb_iters = np.zeros(1, dtype=np.int64)

    return TrainedModel(
        config=config,
        names=names,
        labels=labels,
        width=width,
        height=height,
        block_len=q,
        features=F,
        neighbors=nbr.astype(np.int64),
        weights=W,
        embeddings=Y,
        recon_converged=recon_conv,
        embed_converged=emb_conv,
        embed_iterations=emb_iters,
        **extra,
    )


# ---------------------------------------------------------------------------
# out-of-sample
# ---------------------------------------------------------------------------


@dataclass
class OosResult:
    embeddings: np.ndarray  # (m, b, p)
    neighbors: np.ndarray  # (m, b, k)
    weights: np.ndarray  # (m, b, k)
    converged: np.ndarray  # (m, b)


def embed_images(model, images):
    """Embed unseen images block by block next to the training set.

    Each query block takes its k nearest training blocks (itself included,
    so a duplicate of a training image finds its twin at distance 0), gets
    reconstruction weights from the method's solver, and lands on the same
    weighted combination of the neighbours' embedded rows.
    """
    width, height = _check_images(images)
    if (width, height) != (model.width, model.height):
        raise InvalidParameterError("query images must match the training image size")
    cfg = model.config
    Z = image_features(images, cfg, model.block_len)  # (b, m, q)
    b, m, q = Z.shape
    k = cfg.k
    c = model.c
    nbr = np.empty((b, m, k), dtype=np.int64)
    pieces = []
    kernel = model.kernel() if cfg.kernelized else None
    for i in range(b):
        if cfg.kernelized:
            stats = model.gram_stats(i)
            Kraw = kernel.gram(model.features[i])
            Ktr = kern.normalize_center(Kraw, stats.normalized, stats.centered).K
            stats = replace(stats, K=Ktr)
            cross = kern.cross_kernel_oos(kernel, Z[i], model.features[i], stats)
            g = knn_oos(None, None, k, cross=cross, train_gram=Ktr)
            nbr[i] = g.neighbors
            pieces.append((cross, Ktr))
        else:
            nbr[i] = knn_oos(Z[i], model.features[i], k).neighbors

    conv = np.ones((b, m), dtype=bool)
    if cfg.method == "llise":
        X = _gather(model.features, nbr).reshape(b * m, q, k)
        res = solve_weights_batch(Z.reshape(b * m, q), X, c, cfg.recon_config())
        W = np.stack([r.w for r in res]).reshape(b, m, k)
        conv = np.array([r.converged for r in res]).reshape(b, m)
    elif cfg.method == "kllise":
        kxx = np.empty(b * m)
        kvec = np.empty((b * m, k))
        Kmat = np.empty((b * m, k, k))
        for i, (cross, Ktr) in enumerate(pieces):
            for t in range(m):
                s = i * m + t
                nb = nbr[i, t]
                kxx[s] = cross.self_k[t]
                kvec[s] = cross.cross[t, nb]
                Kmat[s] = Ktr[np.ix_(nb, nb)]
        res = solve_weights_kernel_batch(kxx, kvec, Kmat, c, cfg.recon_config())
        W = np.stack([r.w for r in res]).reshape(b, m, k)
        conv = np.array([r.converged for r in res]).reshape(b, m)
    else:
        W = np.empty((1, m, k))
        for t in range(m):
            nb = nbr[0, t]
            if cfg.method == "lle":
                W[0, t] = lle_weights(Z[0, t], model.features[0, nb].T).w
            else:
                cross, Ktr = pieces[0]
                W[0, t] = klle_weights(cross.self_k[t], cross.cross[t, nb], Ktr[np.ix_(nb, nb)]).w

    Ynb = model.embeddings[np.arange(b)[:, None, None], nbr]  # (b, m, k, p)
    E = np.einsum("bmk,bmkp->bmp", W, Ynb)
    return OosResult(
        embeddings=np.ascontiguousarray(E.transpose(1, 0, 2)),
        neighbors=nbr.transpose(1, 0, 2).copy(),
        weights=W.transpose(1, 0, 2).copy(),
        converged=conv.T.copy(),
    )


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

_ARRAY_FIELDS = (
    "labels", "features", "neighbors", "weights", "embeddings", "recon_converged",
    "embed_converged", "embed_iterations", "raw_diag", "col_means", "grand_mean",
)


def encode_array(a):
    a = np.asarray(a)
    if a.dtype == bool:
        dt = "|u1"
    elif np.issubdtype(a.dtype, np.integer):
        dt = "<i8"
    else:
        dt = "<f8"
    raw = np.ascontiguousarray(a.astype(dt)).tobytes()
    return {"dtype": dt, "shape": list(a.shape), "data": base64.b64encode(raw).decode("ascii")}


def decode_array(d):
    a = np.frombuffer(base64.b64decode(d["data"]), dtype=np.dtype(d["dtype"]))
    a = a.reshape(d["shape"]).copy()
    if d["dtype"] == "|u1":
        return a.astype(bool)
    return a.astype(np.int64 if d["dtype"] == "<i8" else np.float64)


def dumps_json(doc):
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def model_to_dict(model):
    arrays = {}
    for name in _ARRAY_FIELDS:
        v = getattr(model, name)
        if v is not None:
            arrays[name] = encode_array(v)
    return {
        "format": ARCHIVE_FORMAT,
        "config": model.config.to_json(),
        "names": list(model.names),
        "width": model.width,
        "height": model.height,
        "block_len": model.block_len,
        "arrays": arrays,
    }


def model_from_dict(doc):
    if doc.get("format") != ARCHIVE_FORMAT:
        raise InvalidParameterError(f"not a model archive (format={doc.get('format')!r})")
    arrays = {k: decode_array(v) for k, v in doc["arrays"].items()}
    model = TrainedModel(
        config=ExperimentConfig.from_json(doc["config"]),
        names=list(doc["names"]),
        width=int(doc["width"]),
        height=int(doc["height"]),
        block_len=int(doc["block_len"]),
        **arrays,
    )
    b, n = model.features.shape[:2]
    cfg = model.config
    if model.neighbors.shape != (b, n, cfg.k) or model.embeddings.shape != (b, n, cfg.p):
        raise InvalidParameterError("archive arrays do not match its configuration")
    if len(model.names) != n or model.labels.shape != (n,):
        raise InvalidParameterError("archive names/labels do not match the image count")
    return model


def save_model(model, path):
    Path(path).write_text(dumps_json(model_to_dict(model)))


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text()))
