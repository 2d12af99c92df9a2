import numpy as np
import pytest

from madman.attributes import AttributeAssignment
from madman.errors import TooManyObjects
from madman.scene import (CANVAS, CELL, CENTER_CELL, MARGIN, N_CELLS, ObjectSpec, SceneImage, blank_canvas,
                          cell_origin, extract_cells, place_objects)


def obj(d=1):
    return ObjectSpec(d, 0, AttributeAssignment.identity())


def patch(value=0.5):
    img = np.zeros((CELL, CELL, 3), np.float32)
    img[5:20, 10:15] = value
    return img


def test_grid_geometry():
    boxes = [cell_origin(c) for c in range(N_CELLS)]
    assert boxes[0] == (MARGIN, MARGIN)
    for r, c in boxes:
        assert 0 <= r and r + CELL <= CANVAS and 0 <= c and c + CELL <= CANVAS
    spans = {(r, c) for r, c in boxes}
    assert len(spans) == 9
    r, c = cell_origin(CENTER_CELL)
    assert r + CELL / 2 == CANVAS / 2 and c + CELL / 2 == CANVAS / 2
    with pytest.raises(ValueError):
        cell_origin(9)


def test_cells_disjoint():
    occ = np.zeros((CANVAS, CANVAS), int)
    for cell in range(N_CELLS):
        r, c = cell_origin(cell)
        occ[r:r + CELL, c:c + CELL] += 1
    assert occ.max() == 1


def test_single_object_uniform_cells(rng):
    counts = np.zeros(N_CELLS)
    for _ in range(9000):
        s = place_objects([(patch(), obj())], salient_first=False, rng=rng)
        cells = extract_cells(s)
        assert len(cells) == 1
        counts[cells[0][0]] += 1
    freq = counts / counts.sum()
    assert np.all((freq >= 0.095) & (freq <= 0.128))


def test_salient_goes_to_centre(rng):
    for _ in range(2000):
        s = place_objects([(patch(), obj(1)), (patch(), obj(2))], salient_first=True, rng=rng)
        assert s.objects[0].cell == CENTER_CELL and s.objects[0].salient
        assert s.objects[1].cell != CENTER_CELL and not s.objects[1].salient
        assert s.salient_object is s.objects[0]


@pytest.mark.parametrize("n", [0, 3])
def test_object_count_checked(n, rng):
    with pytest.raises(TooManyObjects):
        place_objects([(patch(), obj())] * n, salient_first=False, rng=rng)


def test_extract_cells_roundtrip(rng):
    a, b = patch(0.3), patch(0.9)
    a[0, 0] = 0.1
    s = place_objects([(a, obj(1)), (b, obj(2))], salient_first=False, rng=rng)
    crops = dict(extract_cells(s))
    assert set(crops) == {o.cell for o in s.objects}
    assert np.array_equal(crops[s.objects[0].cell], a)
    assert np.array_equal(crops[s.objects[1].cell], b)


def test_extract_known_cells():
    canvas = blank_canvas()
    for cell in (1, 7):
        r, c = cell_origin(cell)
        canvas[r + 3, c + 4] = 1.0
    assert [c for c, _ in extract_cells(SceneImage(canvas))] == [1, 7]
    assert extract_cells(blank_canvas()) == []


def test_background_black_and_no_overlap(rng):
    for _ in range(10000 // 10):
        s = place_objects([(patch(), obj(1)), (patch(), obj(2))], salient_first=bool(rng.integers(2)), rng=rng)
        assert s.pixels.shape == (CANVAS, CANVAS, 3)
        assert s.objects[0].cell != s.objects[1].cell
        mask = np.ones((CANVAS, CANVAS), bool)
        for o in s.objects:
            r, c = cell_origin(o.cell)
            mask[r:r + CELL, c:c + CELL] = False
        assert not s.pixels[mask].any()
