"""LEVIR-style dataset trees: `root/{train,val,test}/{A,B,label}/<name>.png`"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from src.core.errors import DatasetError
from src.core.log import get_logger
from .imageio import image_size, read_label, read_rgb, write_mask, write_rgb
from .patches import SPLIT_NAMES, crop_patches, split_random
from .samples import BiTemporalSample

logger = get_logger(__name__)

PRE_DIR, POST_DIR, LABEL_DIR = "A", "B", "label"
IMAGE_SUFFIX = ".png"


@dataclass(frozen=True)
class SampleRef:
    """Paths of one sample; pixels are read on `load`"""
    name: str
    pre: Path
    post: Path
    label: Path

    def load(self) -> BiTemporalSample:
        return BiTemporalSample(read_rgb(self.pre), read_rgb(self.post), read_label(self.label), name=self.name)


@dataclass
class ChangeDataset:
    root: Path
    splits: Dict[str, List[SampleRef]] = field(default_factory=dict)

    def names(self, split: str) -> List[str]:
        return [ref.name for ref in self.refs(split)]

    def refs(self, split: str) -> List[SampleRef]:
        if split not in self.splits:
            raise DatasetError(f"dataset {self.root} has no '{split}' split (found {sorted(self.splits)})")
        return self.splits[split]

    def iter_samples(self, split: str) -> Iterator[BiTemporalSample]:
        for ref in self.refs(split):
            yield ref.load()

    def load_split(self, split: str) -> List[BiTemporalSample]:
        return list(self.iter_samples(split))

    def counts(self) -> Dict[str, int]:
        return {name: len(refs) for name, refs in self.splits.items()}


def _stems(directory: Path) -> Dict[str, Path]:
    return {p.stem: p for p in directory.glob(f"*{IMAGE_SUFFIX}") if p.is_file()}


def scan_triplets(directory: Path, check_labels: bool = True) -> List[SampleRef]:
    """Pair `A/`, `B/`, `label/` files by stem, sorted by name"""
    dirs = [directory / d for d in (PRE_DIR, POST_DIR, LABEL_DIR)]
    for d in dirs:
        if not d.is_dir():
            raise DatasetError(f"missing directory {d}")
    pre, post, label = (_stems(d) for d in dirs)

    for stem in sorted(set(pre) | set(post) | set(label)):
        for kind, files, d in zip((PRE_DIR, POST_DIR, LABEL_DIR), (pre, post, label), dirs):
            if stem not in files:
                raise DatasetError(f"sample '{stem}' has no counterpart {d / (stem + IMAGE_SUFFIX)}")

    refs = []
    for stem in sorted(pre):
        ref = SampleRef(stem, pre[stem], post[stem], label[stem])
        sizes = {image_size(p) for p in (ref.pre, ref.post, ref.label)}
        if len(sizes) != 1:
            raise DatasetError(f"sample '{stem}' mixes image sizes {sorted(sizes)} ({ref.pre.parent.parent})")
        if check_labels:
            read_label(ref.label)
        refs.append(ref)
    return refs


def load_dataset(root: Path, splits: Sequence[str] = SPLIT_NAMES, check_labels: bool = True) -> ChangeDataset:
    """Index every present split; pairing, sizes and label encoding are validated here"""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} does not exist")
    dataset = ChangeDataset(root)
    for split in splits:
        if (root / split).is_dir():
            dataset.splits[split] = scan_triplets(root / split, check_labels)
    if not dataset.splits:
        raise DatasetError(f"dataset root {root} has none of the splits {list(splits)}")
    logger.info("loaded dataset %s: %s", root, dataset.counts())
    return dataset


def write_sample(directory: Path, sample: BiTemporalSample) -> None:
    write_rgb(directory / PRE_DIR / f"{sample.name}{IMAGE_SUFFIX}", sample.pre)
    write_rgb(directory / POST_DIR / f"{sample.name}{IMAGE_SUFFIX}", sample.post)
    write_mask(directory / LABEL_DIR / f"{sample.name}{IMAGE_SUFFIX}", sample.label)


def write_dataset(root: Path, splits: Dict[str, Sequence[BiTemporalSample]]) -> Dict[str, int]:
    root = Path(root)
    try:
        for split, samples in splits.items():
            for d in (PRE_DIR, POST_DIR, LABEL_DIR):
                (root / split / d).mkdir(parents=True, exist_ok=True)
            for sample in samples:
                write_sample(root / split, sample)
    except OSError as e:
        raise DatasetError(f"cannot write dataset under {root}: {e}") from e
    return {split: len(samples) for split, samples in splits.items()}


def patchify(source: Path, out: Path, size: int, counts: Tuple[int, int, int], seed: int) -> Dict[str, int]:
    """Crop a flat `source/{A,B,label}` tree into patches and write a random split"""
    patches: Dict[str, BiTemporalSample] = {}
    for ref in scan_triplets(Path(source)):
        for patch in crop_patches(ref.load(), size):
            patches[patch.name] = patch

    splits = split_random(sorted(patches), counts, seed)
    written = write_dataset(out, {
        name: [patches[i] for i in split.ids] for name, split in splits.items()
    })
    logger.info("patchified %d patches from %s into %s: %s", len(patches), source, out, written)
    return written
