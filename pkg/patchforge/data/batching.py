from typing import Iterator, List

from patchforge.core.runtime import numpy_rng
from patchforge.data.records import SampleRecord, SegmentationDataset


def epoch_permutation(n: int, seed: int, epoch: int) -> List[int]:
    """Shuffle order of an epoch, keyed by (seed, epoch)."""
    return [int(i) for i in numpy_rng([seed, epoch]).permutation(n)]


def batches(dataset: SegmentationDataset, batch_size: int, seed: int, epoch: int) -> Iterator[List[SampleRecord]]:
    """Yield shuffled batches; the final partial batch is kept."""
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    order = epoch_permutation(len(dataset), seed, epoch)
    for start in range(0, len(order), batch_size):
        yield [dataset[i] for i in order[start:start + batch_size]]
