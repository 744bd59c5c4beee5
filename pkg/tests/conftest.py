import numpy as np
import pytest

from surffv.mesh import TriMesh, build_icosphere


def octahedron():
    v = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1], [-1, 0, 0], [0, -1, 0], [0, 0, -1]], dtype=float)
    f = [[0, 1, 2], [1, 3, 2], [3, 4, 2], [4, 0, 2], [1, 0, 5], [3, 1, 5], [4, 3, 5], [0, 4, 5]]
    return TriMesh.from_triangles(v, np.array(f))


def box_mesh(n=6, half=(1.0, 1.0, 0.5)):
    """Closed box surface with an n x n triangulated grid on every face."""
    index = {}
    verts = []
    tris = []

    def vid(p):
        key = tuple(np.round(p, 12))
        if key not in index:
            index[key] = len(verts)
            verts.append(p)
        return index[key]

    hx = np.asarray(half, dtype=float)
    for axis in range(3):
        for sign in (-1.0, 1.0):
            u, w = [a for a in range(3) if a != axis]
            s = np.linspace(-1, 1, n + 1)
            for i in range(n):
                for j in range(n):
                    corners = []
                    for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1)):
                        p = np.zeros(3)
                        p[axis] = sign
                        p[u] = s[i + di]
                        p[w] = s[j + dj]
                        corners.append(vid(p * hx))
                    a, b, c, d = corners
                    tris += [[a, b, c], [a, c, d]]
    return TriMesh.from_triangles(np.array(verts), np.array(tris))


@pytest.fixture(scope="session")
def octa():
    return octahedron()


@pytest.fixture(scope="session")
def ico():
    return {lv: build_icosphere(lv) for lv in range(5)}


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import LINES
    except ImportError:
        return
    if LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(LINES):
            terminalreporter.write_line(LINES[n])
