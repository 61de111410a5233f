import pytest

from minimapred import Cluster, ClusterConfig


@pytest.fixture
def small_cluster():
    """4 nodes, tiny chunks, in-memory store."""
    return Cluster(ClusterConfig(num_nodes=4, chunk_size=64, replication=2, seed=7))


@pytest.fixture
def disk_cluster(tmp_path):
    return Cluster.open_disk(
        str(tmp_path / "store"),
        ClusterConfig(num_nodes=4, chunk_size=64, replication=2, seed=7),
    )
