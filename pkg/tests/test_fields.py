import numpy as np
import pytest

from porousmg.fields import (
    FieldCountError,
    FieldError,
    FieldFormatError,
    FieldValueError,
    PermeabilityField,
    coarsen_levels,
    contrast,
    generate_field,
    invert_permeability,
    load_field,
    replicate_field,
    resample_to_grid,
    rescale_field,
    slice_field,
    write_field,
)
from porousmg.mesh import build_hierarchy

KINDS = ["checkerboard", "open_foam", "inclusions", "connected_inclusions"]


def test_checkerboard_half_and_half():
    fld = generate_field("checkerboard", (128, 128), 1.0, 1e-6, block=1)
    assert contrast(fld) == pytest.approx(1e6)
    assert (fld.values == 1.0).sum() == 128 * 128 // 2
    assert (fld.values == 1e-6).sum() == 128 * 128 // 2


def test_checkerboard_blocks():
    fld = generate_field("checkerboard", (16, 16), 2.0, 1.0, block=4)
    grid = fld.as_grid()
    assert np.all(grid[:4, :4] == grid[0, 0])
    assert grid[0, 0] != grid[0, 4]


def test_inclusions_zero_count_constant():
    fld = generate_field("inclusions", (32, 32), 1.0, 1e-4, count=0)
    assert contrast(fld) == 1.0
    assert np.all(fld.values == 1.0)


def test_generator_determinism():
    for kind in KINDS:
        a = generate_field(kind, (32, 32), 1.0, 1e-5, seed=42)
        b = generate_field(kind, (32, 32), 1.0, 1e-5, seed=42)
        assert np.array_equal(a.values, b.values)
        c = generate_field(kind, (32, 32), 1.0, 1e-5, seed=43)
        assert not np.array_equal(a.values, c.values) or kind == "checkerboard"


@pytest.mark.parametrize("kind", KINDS)
def test_generator_fuzz_invariants(kind):
    for seed in range(100):
        fld = generate_field(kind, (16, 16), 1.0, 1e-6, seed=seed)
        assert np.all(fld.values > 0)
        assert np.all(np.isfinite(fld.values))
        assert set(np.unique(fld.values)) <= {1.0, 1e-6}


def test_generator_3d():
    fld = generate_field("checkerboard", (8, 8, 8), 1.0, 1e-4)
    assert fld.dim == 3 and fld.n_cells == 512


def test_generator_validation():
    with pytest.raises(FieldError):
        generate_field("inclusions", (4, 4), 1.0, 1e-6)  # too small
    with pytest.raises(FieldError):
        generate_field("inclusions", (32, 32), 1e-6, 1.0)  # high < low
    with pytest.raises(FieldError):
        generate_field("nope", (32, 32), 1.0, 1e-6)


def test_field_validation_errors():
    with pytest.raises(FieldValueError):
        PermeabilityField((2, 2), np.array([1.0, 2.0, 0.0, 1.0]))
    with pytest.raises(FieldCountError):
        PermeabilityField((2, 2), np.ones(5))


def test_raw_binary_round_trip(tmp_path):
    fld = generate_field("inclusions", (16, 24), 1.0, 1e-5, seed=3)
    path = tmp_path / "field.pfk"
    write_field(fld, path)
    back = load_field(path)
    assert back.dims == fld.dims
    assert np.array_equal(back.values, fld.values)


def test_raw_binary_bad_magic(tmp_path):
    path = tmp_path / "bad.pfk"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(FieldFormatError):
        load_field(path)


def test_raw_binary_count_mismatch(tmp_path):
    fld = generate_field("inclusions", (16, 16), 1.0, 1e-5)
    path = tmp_path / "trunc.pfk"
    write_field(fld, path)
    data = path.read_bytes()
    path.write_bytes(data[:-16])  # drop two values
    with pytest.raises(FieldCountError):
        load_field(path)


def test_ascii_list(tmp_path):
    path = tmp_path / "vals.txt"
    vals = np.arange(1, 25, dtype=float)
    path.write_text(" ".join(str(v) for v in vals))
    fld = load_field(path, fmt="ascii_list", dims=(4, 6))
    assert fld.dims == (4, 6)
    assert np.array_equal(fld.values, vals)
    with pytest.raises(FieldCountError):
        load_field(path, fmt="ascii_list", dims=(5, 6))
    path.write_text("1.0 0.0 2.0")
    with pytest.raises(FieldValueError):
        load_field(path, fmt="ascii_list", dims=(3, 1))
    with pytest.raises(FieldFormatError):
        load_field(path, fmt="ascii_list")  # dims required


def test_ascii_spe10_sized(tmp_path):
    # 60 x 220 x 85 = 1,122,000 values loads (values trivially 1.0).
    path = tmp_path / "spe.txt"
    n = 60 * 220 * 85
    path.write_text("1.0\n" * n)
    fld = load_field(path, fmt="ascii_list", dims=(60, 220, 85))
    assert fld.n_cells == 1_122_000


def test_invert_permeability():
    fld = PermeabilityField((2, 2), np.array([1.0, 2.0, 4.0, 8.0]))
    inv = invert_permeability(fld, scale=2.0)
    assert np.allclose(inv.values, [2.0, 1.0, 0.5, 0.25])


def test_rescale_identity_and_mean():
    fld = generate_field("open_foam", (32, 32), 1.0, 1e-4, seed=1)
    same = rescale_field(fld, (32, 32))
    assert np.array_equal(same.values, fld.values)
    fine = rescale_field(fld, (57, 43))
    assert fine.values.mean() == pytest.approx(fld.values.mean(), rel=1e-12)


def test_rescale_two_to_one():
    fld = PermeabilityField((2, 1), np.array([3.0, 5.0]))
    out = rescale_field(fld, (1, 1))
    assert out.values[0] == pytest.approx(4.0)


def test_rescale_3d_mean_conservation():
    rng = np.random.default_rng(0)
    fld = PermeabilityField((6, 22, 9), rng.uniform(0.1, 10.0, 6 * 22 * 9))
    out = rescale_field(fld, (16, 16, 16))
    assert out.values.mean() == pytest.approx(fld.values.mean(), rel=1e-12)


def test_replicate_and_resample():
    fld = PermeabilityField((2, 2), np.array([1.0, 2.0, 3.0, 4.0]))
    rep = replicate_field(fld, 2)
    assert rep.dims == (4, 4)
    grid = rep.as_grid()
    assert np.all(grid[:2, :2] == 1.0) and np.all(grid[2:, 2:] == 4.0)
    # resample picks replication for exact 2^t refinement
    out = resample_to_grid(fld, (8, 8))
    assert set(np.unique(out.values)) == {1.0, 2.0, 3.0, 4.0}
    # and overlap-averaging otherwise
    out2 = resample_to_grid(fld, (3, 3))
    assert out2.values.mean() == pytest.approx(fld.values.mean(), rel=1e-12)


def test_slice_field():
    rng = np.random.default_rng(5)
    fld = PermeabilityField((4, 5, 6), rng.uniform(1, 2, 120))
    sl = slice_field(fld, 2, 3)
    assert sl.dims == (4, 5)
    # restacking all z-slices reproduces the field
    stack = np.stack([slice_field(fld, 2, i).as_grid() for i in range(6)], axis=0)
    assert np.array_equal(stack.ravel(), fld.values)
    const = PermeabilityField((4, 5, 6), np.full(120, 2.5))
    assert np.all(slice_field(const, 0, 1).values == 2.5)
    with pytest.raises(FieldError):
        slice_field(fld, 2, 6)
    with pytest.raises(FieldError):
        slice_field(sl, 0, 0)


def test_coarsen_levels():
    hier = build_hierarchy(2, (2, 2), 2)
    fld = generate_field("checkerboard", (8, 8), 1.0, 1e-4)
    levels = coarsen_levels(fld, hier)
    assert len(levels) == 3
    assert np.array_equal(levels[2], fld.values)
    # children {1,1,1e-4,1e-4} -> parent 0.50005
    child = np.array([1.0, 1.0, 1e-4, 1e-4])
    assert child.mean() == pytest.approx(0.50005)
    # constant stays constant
    cfld = PermeabilityField((8, 8), np.full(64, 3.0))
    clevels = coarsen_levels(cfld, hier)
    for arr in clevels.per_level:
        assert np.allclose(arr, 3.0)


def test_coarsen_range_contraction_and_mean():
    hier = build_hierarchy(2, (2, 2), 3)
    rng = np.random.default_rng(9)
    for seed in range(20):
        fld = generate_field("inclusions", (16, 16), 1.0, 1e-6, seed=seed)
        # pad to 16x16 field on a 16x16 hierarchy
        h = build_hierarchy(2, (2, 2), 3)
        levels = coarsen_levels(fld, h)
        for j in range(len(levels) - 1):
            assert levels[j].min() >= levels[-1].min() - 1e-15
            assert levels[j].max() <= levels[-1].max() + 1e-15
            assert levels[j].mean() == pytest.approx(levels[-1].mean(), rel=1e-12)
    with pytest.raises(FieldError):
        coarsen_levels(generate_field("checkerboard", (8, 8), 1.0, 0.1), hier)


def test_contrast_values():
    assert contrast(PermeabilityField((2, 2), np.ones(4))) == 1.0
    fld = generate_field("checkerboard", (8, 8), 1.0, 1e-6)
    assert contrast(fld) == pytest.approx(1e6)
