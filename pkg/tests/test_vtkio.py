import numpy as np
import pytest

from mdsens.vtkio import VtkFormatError, read_vtk, write_vtk

NODES = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]], float)
TETS = np.array([[0, 1, 2, 3], [1, 2, 3, 4]])


class TestVtk:
    def test_round_trip(self):
        vals = np.array([0.1, 1e-300 * 3])
        text = write_vtk(NODES, TETS, {"sensitivity": vals, "rho": [100.0, 20.0]})
        nodes, cells, data = read_vtk(text)
        assert np.array_equal(nodes, NODES)
        assert np.array_equal(cells, TETS)
        assert np.array_equal(data["sensitivity"], vals)
        assert list(data) == ["sensitivity", "rho"]

    def test_header_and_types(self):
        text = write_vtk(NODES, TETS, {})
        lines = text.splitlines()
        assert lines[0] == "# vtk DataFile Version 3.0"
        assert lines[2:4] == ["ASCII", "DATASET UNSTRUCTURED_GRID"]
        i = lines.index("CELL_TYPES 2")
        assert lines[i + 1:i + 3] == ["10", "10"]

    def test_triangles(self):
        text = write_vtk(NODES, [[0, 1, 2]], {"a": [1.0]})
        assert "\n5\n" in text
        assert read_vtk(text)[1].shape == (1, 3)

    def test_deterministic(self):
        assert write_vtk(NODES, TETS, {"a": [1.0, 2.0]}) == write_vtk(NODES, TETS, {"a": [1.0, 2.0]})

    def test_write_errors(self):
        with pytest.raises(ValueError):
            write_vtk(NODES, TETS, {"a": [1.0]})
        with pytest.raises(ValueError):
            write_vtk(NODES, TETS, {"two words": [1.0, 2.0]})
        with pytest.raises(ValueError):
            write_vtk(NODES, np.zeros((1, 5), int), {})

    def test_read_errors(self):
        with pytest.raises(VtkFormatError):
            read_vtk("hello\n")
        text = write_vtk(NODES, TETS, {"a": [1.0, 2.0]})
        with pytest.raises(VtkFormatError):
            read_vtk(text.replace("ASCII", "BINARY"))
        with pytest.raises(VtkFormatError):
            read_vtk(text[:-10])
