import numpy as np
import pytest

from convtopo.calibrate import (
    ReferenceField,
    field_mse,
    load_reference,
    mobility_grid,
    save_reference,
    sweep_mobility,
)
from convtopo.errors import SetupError
from convtopo.newton import solve_state
from convtopo.presets import calibration_case


class TestFieldMse:
    def test_identical_fields(self):
        a = np.array([1.0, 2.0, 3.0])
        assert field_mse(a, a) == 0.0

    def test_constant_offset(self):
        a = np.zeros(10)
        assert field_mse(a, a + 3.0) == pytest.approx(9.0, rel=1e-14)

    def test_direct_sum(self):
        assert field_mse(np.array([0.0, 1.0, 2.0]), np.zeros(3)) == pytest.approx(5.0 / 3.0)

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=20), rng.normal(size=20)
        assert field_mse(a, b) == field_mse(b, a)

    def test_length_mismatch(self):
        with pytest.raises(SetupError):
            field_mse(np.zeros(3), np.zeros(4))


class TestGrid:
    def test_grid_hits_nominal_values_exactly(self):
        grid = mobility_grid(0.01, 0.2, 0.01)
        assert grid[8] == 0.09
        assert len(grid) == 20

    def test_invalid_grid(self):
        with pytest.raises(SetupError):
            mobility_grid(0.2, 0.1, 0.01)
        with pytest.raises(SetupError):
            mobility_grid(0.1, 0.2, 0.0)


class TestReferenceIO:
    def test_roundtrip(self, tmp_path):
        ref = ReferenceField(nx=2, ny=2, width=1.0, height=1.0,
                             temperatures=np.arange(9.0), label="test", gr=640.0)
        path = tmp_path / "ref.json"
        save_reference(path, ref)
        back = load_reference(path)
        assert back.nx == 2 and back.label == "test"
        assert np.array_equal(back.temperatures, ref.temperatures)

    def test_size_mismatch_rejected(self):
        with pytest.raises(SetupError):
            ReferenceField(nx=2, ny=2, width=1.0, height=1.0, temperatures=np.zeros(5))

    def test_nonfinite_rejected(self):
        t = np.zeros(9)
        t[3] = np.nan
        with pytest.raises(SetupError):
            ReferenceField(nx=2, ny=2, width=1.0, height=1.0, temperatures=t)

    def test_mesh_mismatch_rejected(self):
        problem, gamma = calibration_case(nx=70, ny=40)
        ref = ReferenceField(nx=7, ny=4, width=14.0, height=4.0, temperatures=np.zeros(40))
        with pytest.raises(SetupError):
            ref.check_mesh(problem.mesh)


class TestSweep:
    def test_roundtrip_recovers_generating_mobility(self):
        # reference produced by this solver at mobility 0.09: the sweep must
        # find it with exactly zero error at the matching grid point
        problem, gamma = calibration_case(nx=70, ny=40)
        state, _ = solve_state(problem, gamma)
        ref = ReferenceField(nx=70, ny=40, width=problem.mesh.width,
                             height=problem.mesh.height, temperatures=state.t.copy())
        result = sweep_mobility(problem, gamma, ref, 0.06, 0.13, 0.01)
        assert result.best_value == 0.09
        assert result.best_error == 0.0
        assert not result.at_boundary
        assert result.unique

    def test_degenerate_zero_flux_flat_curve(self):
        problem, gamma = calibration_case(nx=70, ny=40)
        zero_flux = problem.scaled("q_h", 0.0)
        ref = ReferenceField(nx=70, ny=40, width=problem.mesh.width,
                             height=problem.mesh.height,
                             temperatures=np.zeros(problem.mesh.n_nodes))
        result = sweep_mobility(zero_flux, gamma, ref, 0.05, 0.11, 0.02)
        assert np.allclose(result.errors, 0.0)
        assert not result.unique  # flat curve flagged non-unique
