from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from xfertune.core import ChunkType, Dataset, EmptyDatasetError, NetworkProfile, ValidationError
from xfertune.partitioner import PartitionSpec, classify_average, partition_files, threshold_ladder

MB = 10**6
TEN_GIG = NetworkProfile(1.25e9, 0.04, 32 * MB)


def brute_force_bucket(size: int, bw: int, k: int) -> int:
    # independent oracle: half-open (lo, hi] buckets from integer arithmetic
    cuts = [Fraction(bw, 20), Fraction(bw, 5), Fraction(bw, 2)][: k - 1]
    b = 0
    for c in cuts:
        if size > c:
            b += 1
    return b


def test_thresholds_for_ten_gig():
    assert PartitionSpec.for_bandwidth(1.25e9, 3).thresholds == (62_500_000, 250_000_000)
    assert threshold_ladder(1.25e9) == [62_500_000, 250_000_000, 625_000_000]
    assert PartitionSpec.for_bandwidth(1.25e9, 1).thresholds == ()


def test_k3_three_way_split():
    ds = Dataset.from_sizes([1 * MB, 100 * MB, 400 * MB])
    chunks = partition_files(ds, TEN_GIG, 3)
    assert [c.chunk_type for c in chunks] == [ChunkType.SMALL, ChunkType.MEDIUM, ChunkType.LARGE]
    assert [[f.size for f in c.files] for c in chunks] == [[MB], [100 * MB], [400 * MB]]


def test_empty_buckets_dropped():
    chunks = partition_files(Dataset.from_sizes([MB, 2 * MB]), TEN_GIG, 3)
    assert len(chunks) == 1 and chunks[0].chunk_type is ChunkType.SMALL


def test_k1_keeps_everything_and_types_by_average():
    ds = Dataset.from_sizes([MB, 400 * MB])  # average 200.5 MB -> Medium
    (c,) = partition_files(ds, TEN_GIG, 1)
    assert c.files == ds.files
    assert c.chunk_type is ChunkType.MEDIUM


def test_boundary_goes_to_lower_bucket():
    ds = Dataset.from_sizes([62_500_000, 62_500_001])
    chunks = partition_files(ds, TEN_GIG, 4)
    assert [len(c.files) for c in chunks] == [1, 1]
    assert chunks[0].files[0].size == 62_500_000 and chunks[0].chunk_type is ChunkType.SMALL


def test_k2_upper_bucket_is_medium():
    chunks = partition_files(Dataset.from_sizes([MB, 5 * 10**9]), TEN_GIG, 2)
    assert [c.chunk_type for c in chunks] == [ChunkType.SMALL, ChunkType.MEDIUM]


def test_classify_average_ladder():
    assert classify_average(Fraction(62_500_000), 1.25e9) is ChunkType.SMALL
    assert classify_average(Fraction(62_500_001), 1.25e9) is ChunkType.MEDIUM
    assert classify_average(Fraction(10**10), 1.25e9) is ChunkType.HUGE


@pytest.mark.parametrize("k", [0, 5, 2.5, True, "3"])
def test_invalid_k(k):
    with pytest.raises(ValidationError):
        partition_files(Dataset.from_sizes([MB]), TEN_GIG, k)


def test_empty_dataset():
    with pytest.raises(EmptyDatasetError):
        partition_files(Dataset(()), TEN_GIG, 2)


sizes_st = st.lists(st.integers(1, 3 * 10**9), min_size=1, max_size=60)
bw_st = st.integers(10**6, 10**11)  # whole bytes/second


@given(sizes=sizes_st, bw=bw_st, k=st.integers(1, 4))
def test_partition_is_exact_set_partition(sizes, bw, k):
    ds = Dataset.from_sizes(sizes)
    chunks = partition_files(ds, NetworkProfile(float(bw), 0.01, MB), k)
    ids = [f.id for c in chunks for f in c.files]
    assert sorted(ids) == sorted(f.id for f in ds.files)
    assert len(ids) == len(set(ids))
    assert sum(c.total_size for c in chunks) == ds.total_size


@given(sizes=sizes_st, bw=bw_st, k=st.integers(2, 4))
def test_partition_matches_brute_force_classifier(sizes, bw, k):
    ds = Dataset.from_sizes(sizes)
    chunks = partition_files(ds, NetworkProfile(float(bw), 0.01, MB), k)
    for c in chunks:
        for f in c.files:
            assert brute_force_bucket(f.size, bw, k) == int(c.chunk_type)
    # manifest order is kept inside each chunk
    pos = {f.id: i for i, f in enumerate(ds.files)}
    for c in chunks:
        idx = [pos[f.id] for f in c.files]
        assert idx == sorted(idx)
    assert [c.chunk_type for c in chunks] == sorted(c.chunk_type for c in chunks)


@given(sizes=sizes_st, bw=bw_st, k=st.integers(2, 4))
def test_lower_chunks_never_exceed_separating_threshold(sizes, bw, k):
    chunks = partition_files(Dataset.from_sizes(sizes), NetworkProfile(float(bw), 0.01, MB), k)
    cuts = [Fraction(bw, d) for d in (20, 5, 2)][: k - 1]
    for lo in chunks:
        for hi in chunks:
            if lo.chunk_type < hi.chunk_type:
                sep = cuts[int(lo.chunk_type)]
                assert max(f.size for f in lo.files) <= sep < min(f.size for f in hi.files)


@given(sizes=sizes_st, bw=bw_st, k=st.integers(1, 4))
def test_partition_idempotent(sizes, bw, k):
    prof = NetworkProfile(float(bw), 0.01, MB)
    for c in partition_files(Dataset.from_sizes(sizes), prof, k):
        again = partition_files(Dataset(c.files), prof, k)
        if k == 1:
            assert again[0].files == c.files
        else:
            assert again == [c]


@given(bw=bw_st, rtt_us=st.integers(1, 10**6), data=st.data())
def test_medium_average_gives_bdp_ratio_between_5_and_20_rtt(bw, rtt_us, data):
    # Medium averages lie in (BW/20, BW/5]; BDP/avg then sits in [5 rtt, 20 rtt)
    n = data.draw(st.integers(1, 20))
    sizes = data.draw(st.lists(st.integers(bw // 20 + 1, bw // 5), min_size=n, max_size=n))
    (c,) = [c for c in partition_files(Dataset.from_sizes(sizes), NetworkProfile(float(bw), 0.01, MB), 3)]
    assert c.chunk_type is ChunkType.MEDIUM
    rtt = Fraction(rtt_us, 10**6)
    ratio = Fraction(bw) * rtt / c.avg_file_size
    assert 5 * rtt <= ratio < 20 * rtt
