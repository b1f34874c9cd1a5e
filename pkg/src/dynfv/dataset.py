"""In-memory sequences and the on-disk dataset layout.

Layout under a dataset root::

    dataset.json                      cameras and per-person roles
    <camera>/mask.png                 0/255 camera mask (optional)
    <camera>/tracks.trk               TRK records, sequence_id = person id
    <camera>/<person>/<frame>.png     64x128 RGB crops, zero-padded index

Roles: ``main`` (evaluated identities), ``pool`` (extra training identities
for the appearance-impaired protocol), ``target`` and ``distractor``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .exceptions import DynfvError, FormatError
from .trajectory import CROP_SIZE, group_by_sequence, parse_trajectory_file, write_trajectory_file

ROLES = ("main", "pool", "target", "distractor")


@dataclass(eq=False)
class Sequence:
    person_id: str
    camera_id: str
    frames: np.ndarray = None          # (T, 128, 64, 3) uint8
    tracklets: list = field(default_factory=list)
    mask: np.ndarray | None = None     # (128, 64) bool, per camera

    @property
    def key(self):
        return f"{self.person_id}@{self.camera_id}"


@dataclass(eq=False)
class Dataset:
    sequences: list
    roles: dict = field(default_factory=dict)   # person -> role
    name: str = "dataset"

    def role(self, person):
        return self.roles.get(person, "main")

    def persons(self, role=None):
        ids = sorted({s.person_id for s in self.sequences})
        return ids if role is None else [p for p in ids if self.role(p) == role]

    @property
    def cameras(self):
        return sorted({s.camera_id for s in self.sequences})

    def get(self, person, camera):
        for s in self.sequences:
            if s.person_id == person and s.camera_id == camera:
                return s
        raise KeyError((person, camera))

    def of_person(self, person):
        return sorted((s for s in self.sequences if s.person_id == person),
                      key=lambda s: s.camera_id)


def load_mask(path):
    """Binary (128, 64) mask from a 0/255 image."""
    arr = np.asarray(Image.open(path).convert("L"))
    if arr.shape != (CROP_SIZE[1], CROP_SIZE[0]):
        raise FormatError(f"{path}: mask must be {CROP_SIZE[0]}x{CROP_SIZE[1]}, got {arr.shape[::-1]}")
    return arr > 127


def save_mask(path, mask):
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8)).save(path)


def load_frames(directory):
    files = sorted(Path(directory).glob("*.png"))
    if not files:
        raise DynfvError(f"no PNG frames under {directory}")
    frames = [np.asarray(Image.open(f).convert("RGB")) for f in files]
    for f, arr in zip(files, frames):
        if arr.shape != (CROP_SIZE[1], CROP_SIZE[0], 3):
            raise FormatError(f"{f}: frames must be 64x128 RGB, got {arr.shape}")
    return np.stack(frames)


def save_frames(directory, frames):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, fr in enumerate(frames):
        Image.fromarray(np.asarray(fr, dtype=np.uint8)).save(directory / f"{i:04d}.png")


def save_dataset(root, ds):
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    cameras = ds.cameras
    meta = {"name": ds.name, "cameras": cameras,
            "roles": {p: ds.role(p) for p in ds.persons()}}
    (root / "dataset.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    for cam in cameras:
        seqs = sorted((s for s in ds.sequences if s.camera_id == cam), key=lambda s: s.person_id)
        (root / cam).mkdir(exist_ok=True)
        masks = [s.mask for s in seqs if s.mask is not None]
        if masks:
            save_mask(root / cam / "mask.png", masks[0])
        write_trajectory_file(root / cam / "tracks.trk",
                              [(s.person_id, t) for s in seqs for t in s.tracklets])
        for s in seqs:
            if s.frames is not None:
                save_frames(root / cam / s.person_id, s.frames)


def load_dataset(root, frames=True):
    root = Path(root)
    meta_path = root / "dataset.json"
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
        cameras = meta["cameras"]
        roles = meta.get("roles", {})
        name = meta.get("name", root.name)
    else:
        cameras = sorted(p.name for p in root.iterdir() if p.is_dir())
        roles, name = {}, root.name
    seqs = []
    for cam in cameras:
        cam_dir = root / cam
        mask = load_mask(cam_dir / "mask.png") if (cam_dir / "mask.png").exists() else None
        trk = cam_dir / "tracks.trk"
        tracks = group_by_sequence(parse_trajectory_file(trk)) if trk.exists() else {}
        persons = set(tracks) | {p.name for p in cam_dir.iterdir() if p.is_dir()}
        for person in sorted(persons):
            fr = None
            if frames and (cam_dir / person).is_dir():
                fr = load_frames(cam_dir / person)
            seqs.append(Sequence(person, cam, fr, tracks.get(person, []), mask))
    return Dataset(seqs, roles, name)
