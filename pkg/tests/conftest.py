import pytest

from loopfield import compute_green, grid_network, path_network, two_vertex_network


@pytest.fixture(scope="session")
def two_vertex():
    net = two_vertex_network()
    return net, compute_green(net)


@pytest.fixture(scope="session")
def path3():
    net = path_network(3)
    return net, compute_green(net)


@pytest.fixture(scope="session")
def grid3():
    net = grid_network(3, 3)
    return net, compute_green(net)
