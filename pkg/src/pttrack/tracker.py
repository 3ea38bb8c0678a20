"""Vote-and-propose single-object tracker with two optional attention blocks.

Pipeline per frame: crop and canonicalize template/search clouds into the
previous box frame, extract seeds with a one-stage grouping backbone,
augment search features with a template summary, regress per-seed votes
(attention block 1 optional), cluster votes into scored box proposals
(attention block 2 optional), and select the best-scoring proposal.

Both attention blocks exist in every model instance regardless of wiring,
so all four wirings share one checkpoint schema and identical initial
weights for any given seed.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from . import tape
from .attention import PTTConfig, PTTModule
from .config import TrackerConfig, config_to_dict
from .errors import DataError, NumericalError
from .geometry import (
    Box3D,
    box_from_frame,
    crop_points,
    footprint_contains,
    points_to_box_frame,
    wrap_angle,
)
from .nn import Adam, LinearLayer, Mlp2, assign_params, load_params, save_params
from .rng import SplitMix64, substream_seed
from .sampling import farthest_point_sample, grouped_indices, random_sample
from .tape import Tensor, backward, constant

CHECKPOINT_MANIFEST_FORMAT = "pttckpt-manifest1"


def pad_cloud(points: np.ndarray, n: int, seed: int) -> np.ndarray:
    """Resample with replacement up to ``n`` points; larger clouds pass through."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(points) == 0:
        raise ValueError("cannot pad an empty cloud")
    if len(points) >= n:
        return points
    result = random_sample(points, n, rng_seed=seed)
    return points[result.indices]


@dataclass
class Votes:
    """Per-seed predicted centers, refined features and objectness logits."""

    coords: np.ndarray  # (N, 3) seed coordinates the votes started from
    centers: Tensor  # (N, 3)
    feats: Tensor  # (N, D)
    logits: Tensor  # (N,)


@dataclass
class Proposals:
    """Clustered box candidates in the local (search) frame."""

    centers: np.ndarray  # (C, 3) cluster centers
    scores: Tensor  # (C,)
    offsets: Tensor  # (C, 3) center residuals
    dthetas: Tensor  # (C,) yaw residuals
    size: np.ndarray  # (3,) box size used for materialized boxes
    # graph view of ``centers``; regression targets differentiate through it
    centers_t: Tensor | None = None

    def box_at(self, index: int) -> Box3D:
        return Box3D(
            center=self.centers[index] + self.offsets.data[index],
            size=self.size,
            ry=wrap_angle(float(self.dthetas.data[index])),
        )

    def __len__(self) -> int:
        return len(self.centers)


def select(proposals: Proposals) -> Box3D:
    """Best-scoring proposal; score ties go to the lowest cluster index."""
    if len(proposals) == 0:
        raise ValueError("no proposals to select from")
    return proposals.box_at(int(np.argmax(proposals.scores.data)))


class TrackerModel:
    """All trainable state of the tracker."""

    def __init__(self, config: TrackerConfig, seed: int):
        self.config = config
        self.seed = seed
        d, m, k = config.d_feat, config.m_embed, config.k_neighbors
        ptt_cfg = PTTConfig(d_feat=d, m_embed=m, k_neighbors=k)
        self.backbone_mlp = Mlp2.create("backbone.mlp", 3, config.backbone_hidden, d, seed)
        self.augment_proj = LinearLayer.create("augment.proj", 2 * d, d, seed)
        self.ptt_vote = PTTModule("ptt_vote", ptt_cfg, seed)
        self.vote_head = Mlp2.create("vote_head", d, config.head_hidden, 4, seed)
        self.cluster_mlp = Mlp2.create("cluster.mlp", d + 3, config.backbone_hidden, d, seed)
        self.ptt_prop = PTTModule("ptt_prop", ptt_cfg, seed)
        self.prop_head = Mlp2.create("prop_head", d, config.head_hidden, 5, seed)

    def parameters(self):
        return (
            self.backbone_mlp.parameters()
            + self.augment_proj.parameters()
            + self.ptt_vote.parameters()
            + self.vote_head.parameters()
            + self.cluster_mlp.parameters()
            + self.ptt_prop.parameters()
            + self.prop_head.parameters()
        )

    # ------------------------------------------------------------ stages

    def backbone(self, points: np.ndarray, sample_seed: int):
        """Seed coordinates plus pooled local features: (N, 3), (N, D)."""
        cfg = self.config
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        if len(points) < cfg.n_seeds:
            raise ValueError(
                f"backbone needs >= {cfg.n_seeds} points, got {len(points)}; pad first"
            )
        if cfg.sampler == "fps":
            idx = farthest_point_sample(points, cfg.n_seeds, start=0)
        else:
            idx = random_sample(points, cfg.n_seeds, rng_seed=sample_seed).indices
        seeds = points[idx]
        padded = grouped_indices(seeds, points, cfg.backbone_radius, cfg.backbone_group)
        gathered = tape.gather(constant(points), padded)  # (N, G, 3)
        rel = tape.sub(gathered, constant(seeds.reshape(-1, 1, 3)))
        feats = tape.reduce_max(self.backbone_mlp(rel), axis=1)  # (N, D)
        return seeds, feats

    def augment(self, template_feats: Tensor, search_feats: Tensor) -> Tensor:
        """Concatenate a global template summary onto every search feature."""
        d = self.config.d_feat
        if template_feats.data.shape[-1] != d or search_feats.data.shape[-1] != d:
            raise ValueError("augment: feature width mismatch")
        summary = tape.reduce_max(template_feats, axis=0)  # (D,)
        n = len(search_feats.data)
        tiled = tape.gather(tape.reshape(summary, (1, d)), np.zeros(n, dtype=np.int64))
        return self.augment_proj(tape.concat([search_feats, tiled], axis=-1))

    def vote_stage(self, coords: np.ndarray, feats: Tensor, use_ptt: bool) -> Votes:
        """Per-seed center offsets (x, y, z) and objectness logits."""
        if use_ptt:
            feats = self.ptt_vote.forward(Tensor(coords), feats)
        out = self.vote_head(feats)  # (N, 4)
        offsets = tape.slice_last(out, 0, 3)
        logits = tape.reshape(tape.slice_last(out, 3, 4), (len(coords),))
        centers = tape.add(constant(coords), offsets)
        return Votes(coords=coords, centers=centers, feats=feats, logits=logits)

    def propose_stage(self, votes: Votes, size: np.ndarray, use_ptt: bool) -> Proposals:
        """Cluster votes and emit scored oriented-box candidates."""
        cfg = self.config
        vote_pts = votes.centers.data
        if len(vote_pts) < cfg.n_clusters:
            raise ValueError("fewer votes than clusters")
        cidx = farthest_point_sample(vote_pts, cfg.n_clusters, start=0)
        centers_t = tape.gather(votes.centers, cidx)  # (C, 3), still on the graph
        centers = centers_t.data
        padded = grouped_indices(centers, vote_pts, cfg.cluster_radius, cfg.cluster_group)
        gathered_feats = tape.gather(votes.feats, padded)  # (C, G, D)
        gathered_centers = tape.gather(votes.centers, padded)  # (C, G, 3)
        c = len(centers)
        rel = tape.sub(gathered_centers, tape.reshape(centers_t, (c, 1, 3)))
        grouped = tape.concat([gathered_feats, rel], axis=-1)
        cluster_feats = tape.reduce_max(self.cluster_mlp(grouped), axis=1)  # (C, D)
        if use_ptt:
            cluster_feats = self.ptt_prop.forward(centers_t, cluster_feats)
        head = self.prop_head(cluster_feats)  # (C, 5)
        return Proposals(
            centers=centers,
            scores=tape.reshape(tape.slice_last(head, 0, 1), (c,)),
            offsets=tape.slice_last(head, 1, 4),
            dthetas=tape.reshape(tape.slice_last(head, 4, 5), (c,)),
            size=np.asarray(size, dtype=float).reshape(3),
            centers_t=centers_t,
        )

    def forward(self, template: np.ndarray, search: np.ndarray, size, sample_seed: int):
        """Full pass over canonicalized clouds; returns (votes, proposals)."""
        cfg = self.config
        t_coords, t_feats = self.backbone(template, substream_seed(sample_seed, "template"))
        s_coords, s_feats = self.backbone(search, substream_seed(sample_seed, "search"))
        augmented = self.augment(t_feats, s_feats)
        votes = self.vote_stage(s_coords, augmented, cfg.ptt_vote)
        proposals = self.propose_stage(votes, size, cfg.ptt_prop)
        return votes, proposals


# ---------------------------------------------------------------- loss


@dataclass
class LossReport:
    """The four loss terms and their exact weighted sum."""

    l_cv: float
    l_cb: float
    l_rv: float
    l_rb: float
    l_all: float
    no_foreground: bool
    no_positive: bool
    tensor: Tensor | None = None


def tracker_loss(
    votes: Votes, proposals: Proposals, gt_box: Box3D, config: TrackerConfig
) -> LossReport:
    """Vote classification/regression plus proposal classification/regression.

    Labels: a seed is foreground iff it lies in the ground-truth footprint;
    a cluster is positive iff its center is within ``positive_radius`` of the
    ground-truth center. Regressions average over labeled rows only and fall
    back to exact zero (flagged) when a label set is empty.
    """
    beta = config.smooth_l1_beta
    fg = footprint_contains(gt_box, votes.coords)
    l_cv = tape.reduce_mean(tape.bce_with_logits(votes.logits, fg.astype(float)))

    no_foreground = not bool(fg.any())
    if no_foreground:
        l_rv = constant(0.0)
    else:
        rows = np.nonzero(fg)[0]
        target = np.broadcast_to(gt_box.center, (len(rows), 3))
        l_rv = tape.reduce_mean(
            tape.smooth_l1(tape.gather(votes.centers, rows), target, beta=beta)
        )

    dist = np.linalg.norm(proposals.centers - gt_box.center, axis=1)
    positive = dist <= config.positive_radius
    l_cb = tape.reduce_mean(tape.bce_with_logits(proposals.scores, positive.astype(float)))

    no_positive = not bool(positive.any())
    if no_positive:
        l_rb = constant(0.0)
    else:
        rows = np.nonzero(positive)[0]
        r = len(rows)
        # smooth-l1 treats its target as fixed, so regress the residual
        # against zero: the offset target moves with the cluster centers and
        # that dependence must stay on the graph
        centers_rows = (
            tape.gather(proposals.centers_t, rows)
            if proposals.centers_t is not None
            else constant(proposals.centers[rows])
        )
        offset_resid = tape.sub(
            tape.add(tape.gather(proposals.offsets, rows), centers_rows),
            constant(np.broadcast_to(gt_box.center, (r, 3))),
        )
        theta_resid = tape.sub(
            tape.gather(proposals.dthetas, rows), constant(np.full(r, gt_box.ry))
        )
        resid = tape.concat([offset_resid, tape.reshape(theta_resid, (r, 1))], axis=-1)
        l_rb = tape.reduce_mean(tape.smooth_l1(resid, 0.0, beta=beta))

    l_all = tape.add(
        tape.add(
            tape.add(l_cv, tape.mul(constant(config.lambda1), l_cb)),
            tape.mul(constant(config.lambda2), l_rv),
        ),
        tape.mul(constant(config.lambda3), l_rb),
    )
    return LossReport(
        l_cv=l_cv.data.item(),
        l_cb=l_cb.data.item(),
        l_rv=l_rv.data.item(),
        l_rb=l_rb.data.item(),
        l_all=l_all.data.item(),
        no_foreground=no_foreground,
        no_positive=no_positive,
        tensor=l_all,
    )


# ---------------------------------------------------------------- training


@dataclass
class TrainSample:
    """One canonicalized (template, search, target) training triple."""

    template: np.ndarray  # (Pt, 3) in the template box frame
    search: np.ndarray  # (Ps, 3) in the perturbed reference frame
    gt_center: np.ndarray  # (3,) target center, reference frame
    gt_ry: float  # target yaw, reference frame
    size: np.ndarray  # (3,)
    sample_id: str


def crop_with_slack(cloud, box, margin, z_slack):
    """Crop with extra vertical tolerance on top of the horizontal margin."""
    grown = Box3D(
        center=box.center,
        size=[box.w, box.h + 2.0 * z_slack, box.l],
        ry=box.ry,
    )
    return crop_points(cloud, grown, margin)


TEMPLATE_Z_SLACK = 0.3
SEARCH_Z_SLACK = 0.5


def build_training_samples(tracklets, config: TrackerConfig, seed: int) -> list:
    """Perturbed-reference samples: the model must re-center a box that was
    offset by a random (dx, dy, dz, dtheta) from the true target pose."""
    samples = []
    for trk in tracklets:
        first_points, gt0 = trk.frames[0]
        template_pts, _ = crop_with_slack(
            np.asarray(first_points, dtype=float), gt0, 0.0, TEMPLATE_Z_SLACK
        )
        if len(template_pts) == 0:
            continue
        template_local = points_to_box_frame(template_pts, gt0)
        stream = SplitMix64(substream_seed(seed, f"samples/{trk.name}"))
        frame_ids = list(range(1, len(trk)))
        stream.shuffle(frame_ids)
        frame_ids = sorted(frame_ids[: config.samples_per_tracklet])
        for t in frame_ids:
            points, gt = trk.frames[t]
            dx = stream.next_uniform(-config.offset_xy, config.offset_xy)
            dy = stream.next_uniform(-config.offset_xy, config.offset_xy)
            dz = stream.next_uniform(-config.offset_z, config.offset_z)
            dth = stream.next_uniform(-config.offset_theta, config.offset_theta)
            ref = Box3D(
                center=gt.center + np.array([dx, dy, dz]),
                size=gt.size.copy(),
                ry=wrap_angle(gt.ry + dth),
            )
            search_pts, _ = crop_with_slack(
                np.asarray(points, dtype=float), ref, config.search_margin, SEARCH_Z_SLACK
            )
            if len(search_pts) == 0:
                continue
            samples.append(
                TrainSample(
                    template=template_local,
                    search=points_to_box_frame(search_pts, ref),
                    gt_center=points_to_box_frame(gt.center.reshape(1, 3), ref)[0],
                    gt_ry=wrap_angle(gt.ry - ref.ry),
                    size=gt.size.copy(),
                    sample_id=f"{trk.name}/{t}",
                )
            )
    return samples


@dataclass
class EpochLog:
    epoch: int
    lr: float
    l_cv: float
    l_cb: float
    l_rv: float
    l_rb: float
    l_all: float
    batches: int
    no_foreground: int
    no_positive: int

    def line(self) -> str:
        return (
            f"epoch={self.epoch} lr={self.lr!r} l_cv={self.l_cv:.6f} "
            f"l_cb={self.l_cb:.6f} l_rv={self.l_rv:.6f} l_rb={self.l_rb:.6f} "
            f"l_all={self.l_all:.6f} batches={self.batches} "
            f"no_fg={self.no_foreground} no_pos={self.no_positive}"
        )


def _sample_loss(model: TrackerModel, sample: TrainSample, seed: int) -> LossReport:
    cfg = model.config
    template = pad_cloud(
        sample.template, cfg.n_seeds, substream_seed(seed, f"pad-t/{sample.sample_id}")
    )
    search = pad_cloud(
        sample.search, cfg.n_seeds, substream_seed(seed, f"pad-s/{sample.sample_id}")
    )
    votes, proposals = model.forward(
        template, search, sample.size, substream_seed(seed, f"rs/{sample.sample_id}")
    )
    gt_box = Box3D(center=sample.gt_center, size=sample.size, ry=sample.gt_ry)
    return tracker_loss(votes, proposals, gt_box, cfg)


def train_model(samples: list, config: TrackerConfig, seed: int):
    """Adam training over shuffled minibatches; returns (model, epoch logs).

    Deterministic for a fixed seed on one thread. A non-finite loss aborts
    with the offending batch id.
    """
    if not samples:
        raise DataError("training set is empty")
    model = TrackerModel(config, substream_seed(seed, "init"))
    opt = Adam(
        model.parameters(),
        lr=config.lr,
        lr_drop_epoch=config.lr_drop_epoch,
        lr_drop_factor=config.lr_drop_factor,
    )
    logs = []
    for epoch in range(config.epochs):
        lr = opt.start_epoch(epoch)
        order = list(range(len(samples)))
        SplitMix64(substream_seed(seed, f"epoch/{epoch}")).shuffle(order)
        sums = np.zeros(5)
        flags = [0, 0]
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            batch_id = f"{epoch}/{n_batches}"
            opt.zero_grad()
            total = None
            for si in batch:
                report = _sample_loss(model, samples[si], seed)
                if not np.isfinite(report.l_all):
                    raise NumericalError(f"non-finite loss in batch {batch_id}")
                sums += [report.l_cv, report.l_cb, report.l_rv, report.l_rb, report.l_all]
                flags[0] += report.no_foreground
                flags[1] += report.no_positive
                total = report.tensor if total is None else tape.add(total, report.tensor)
            backward(tape.mul(total, 1.0 / len(batch)))
            try:
                opt.step()
            except NumericalError as exc:
                raise NumericalError(f"{exc} (batch {batch_id})")
            n_batches += 1
        means = sums / len(order)
        logs.append(
            EpochLog(
                epoch=epoch,
                lr=lr,
                l_cv=means[0],
                l_cb=means[1],
                l_rv=means[2],
                l_rb=means[3],
                l_all=means[4],
                batches=n_batches,
                no_foreground=flags[0],
                no_positive=flags[1],
            )
        )
    return model, logs


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(path, model: TrackerModel) -> None:
    """JSON manifest line (config snapshot) followed by binary parameters."""
    manifest = {
        "format": CHECKPOINT_MANIFEST_FORMAT,
        "config": config_to_dict(model.config),
    }
    with open(path, "wb") as fp:
        fp.write(json.dumps(manifest, sort_keys=True).encode("utf-8") + b"\n")
        save_params(fp, model.parameters())


def load_checkpoint(path) -> TrackerModel:
    with open(path, "rb") as fp:
        line = fp.readline()
        try:
            manifest = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise DataError(f"{path}: not a tracker checkpoint")
        if manifest.get("format") != CHECKPOINT_MANIFEST_FORMAT:
            raise DataError(f"{path}: unsupported checkpoint manifest")
        try:
            config = TrackerConfig(**manifest["config"])
        except (KeyError, TypeError) as exc:
            raise DataError(f"{path}: bad config snapshot in checkpoint: {exc}")
        values = load_params(fp)
    model = TrackerModel(config, seed=0)
    assign_params(model.parameters(), values)
    return model


# ---------------------------------------------------------------- tracking


@dataclass
class TrackResult:
    boxes: list  # per-frame Box3D, world frame
    carried: list  # per-frame bool: previous box carried forward
    timings: dict | None = None

    @property
    def carried_frames(self) -> int:
        return int(sum(self.carried))


def _canonical_crop(points, box):
    cropped, _ = crop_with_slack(
        np.asarray(points, dtype=float), box, 0.0, TEMPLATE_Z_SLACK
    )
    if len(cropped) == 0:
        return cropped
    return points_to_box_frame(cropped, box)


def track_tracklet(
    model: TrackerModel,
    tracklet,
    seed: int,
    template_mode: str | None = None,
    collect_timing: bool = False,
) -> TrackResult:
    """Run the tracker once over a tracklet, seeded by the first gt box.

    The template is assembled per ``template_mode`` from canonicalized crops
    of earlier frames at their predicted boxes; an empty template or search
    crop carries the previous box forward and flags the frame.
    """
    cfg = model.config
    mode = template_mode if template_mode is not None else cfg.template_mode
    if mode not in ("first", "previous", "first+previous", "all-previous"):
        raise DataError(f"unknown template mode {mode!r}")

    first_points, gt0 = tracklet.frames[0]
    boxes = [gt0]
    carried = [False]
    crops = [_canonical_crop(first_points, gt0)]  # crops[s]: frame s at boxes[s]
    timings = {"prepare": [], "forward": [], "post": []} if collect_timing else None

    for t in range(1, len(tracklet)):
        points, _ = tracklet.frames[t]
        prev_box = boxes[t - 1]
        tic = time.perf_counter()

        if mode == "first":
            parts = [crops[0]]
        elif mode == "previous":
            parts = [crops[t - 1]]
        elif mode == "first+previous":
            parts = [crops[0]] + ([crops[t - 1]] if t - 1 > 0 else [])
        else:
            parts = crops[:t]
        parts = [p for p in parts if len(p)]
        template = np.concatenate(parts, axis=0) if parts else np.empty((0, 3))
        if len(template) > cfg.template_budget:
            picked = random_sample(
                template, cfg.template_budget, rng_seed=substream_seed(seed, f"budget/{t}")
            )
            template = template[np.sort(picked.indices)]

        search_pts, _ = crop_with_slack(
            np.asarray(points, dtype=float), prev_box, cfg.search_margin, SEARCH_Z_SLACK
        )
        if len(template) == 0 or len(search_pts) == 0:
            boxes.append(
                Box3D(center=prev_box.center.copy(), size=prev_box.size.copy(), ry=prev_box.ry)
            )
            carried.append(True)
            crops.append(_canonical_crop(points, boxes[t]))
            if collect_timing:
                toc = time.perf_counter()
                timings["prepare"].append(toc - tic)
                timings["forward"].append(0.0)
                timings["post"].append(0.0)
            continue

        search_local = points_to_box_frame(search_pts, prev_box)
        template_in = pad_cloud(template, cfg.n_seeds, substream_seed(seed, f"pad-t/{t}"))
        search_in = pad_cloud(search_local, cfg.n_seeds, substream_seed(seed, f"pad-s/{t}"))
        mid = time.perf_counter()

        _, proposals = model.forward(
            template_in, search_in, gt0.size, substream_seed(seed, f"frame/{t}")
        )
        local_box = select(proposals)
        done = time.perf_counter()

        world = box_from_frame(local_box.center, local_box.ry, gt0.size, prev_box)
        boxes.append(world)
        carried.append(False)
        crops.append(_canonical_crop(points, world))
        if collect_timing:
            timings["prepare"].append(mid - tic)
            timings["forward"].append(done - mid)
            timings["post"].append(time.perf_counter() - done)

    return TrackResult(boxes=boxes, carried=carried, timings=timings)
