from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.linalg

from gridmpc.models import (
    AreaParams,
    BatteryParams,
    ContinuousModel,
    Plant,
    TieLineParams,
    build_one_area,
    build_two_area_coupled,
    discretize,
    plant_derivative,
    tie_line_power,
)

AREA = AreaParams(f0_hz=50.0, inertia_s=6.0, base_power_pu=1.0, load_damping=66.67)
BATTERY = BatteryParams()
TIE = TieLineParams(max_transfer_pu=0.2)


class TestAreaParams:
    def test_reference_decay_rate(self):
        # -f0 / (2 H S_B D_l) for the reference parameter set.
        assert abs(AREA.freq_decay - (-50.0 / (2 * 6 * 1 * 66.67))) < 1e-15
        assert abs(AREA.freq_decay + 0.0624971) < 1e-6

    def test_reference_input_gain(self):
        assert abs(AREA.input_gain - 50.0 / 12.0) < 1e-12

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            AreaParams(f0_hz=0.0)
        with pytest.raises(ValueError):
            AreaParams(inertia_s=-1.0)


class TestBatteryParams:
    def test_defaults(self):
        assert BATTERY.capacity_pu_s == 50.0
        assert BATTERY.self_discharge_pu == 0.0

    def test_rejects_inverted_bounds(self):
        with pytest.raises(ValueError):
            BatteryParams(power_min_pu=0.2, power_max_pu=-0.2)
        with pytest.raises(ValueError):
            BatteryParams(soc_min=1.0, soc_max=-1.0)


class TestOneAreaModel:
    def test_matrix_entries(self):
        model = build_one_area(AREA, BATTERY)
        gain = AREA.input_gain / AREA.f0_hz
        assert np.allclose(model.a, [[AREA.freq_decay, 0.0], [0.0, 0.0]], atol=0)
        assert np.allclose(model.b, [[gain, gain], [0.0, -1.0 / 50.0]], atol=0)

    def test_self_discharge_enters_soc_row(self):
        battery = BatteryParams(self_discharge_pu=0.01)
        model = build_one_area(AREA, battery)
        assert abs(model.a[1, 1] - (-0.01 / 50.0)) < 1e-15

    def test_normalization_consistency(self):
        # Integrating the normalized model and rescaling by f0 must reproduce
        # the unnormalized deviation dynamics trajectory.
        model = build_one_area(AREA, BATTERY)
        a_unnorm = np.array([[AREA.freq_decay, 0.0], [0.0, 0.0]])
        rng = np.random.default_rng(5)
        x_norm = rng.uniform(-0.01, 0.01, 2)
        x_unnorm = np.array([x_norm[0] * AREA.f0_hz, x_norm[1]])
        ts = 0.1
        step_norm = scipy.linalg.expm(model.a * ts)
        step_unnorm = scipy.linalg.expm(a_unnorm * ts)
        for _ in range(100):
            x_norm = step_norm @ x_norm
            x_unnorm = step_unnorm @ x_unnorm
        assert abs(x_norm[0] * AREA.f0_hz - x_unnorm[0]) < 1e-10
        assert abs(x_norm[1] - x_unnorm[1]) < 1e-10


class TestTwoAreaModel:
    def test_coupling_entries(self):
        model = build_two_area_coupled((AREA, AREA), (BATTERY, BATTERY), TIE)
        # In normalized coordinates the angle-coupling gain is the printed
        # freq_decay * load_damping * max_transfer product scaled by 1/f0.
        printed = AREA.freq_decay * AREA.load_damping * TIE.max_transfer_pu
        assert abs(printed + 0.8333) < 1e-3
        assert abs(model.a[0, 4] - printed / AREA.f0_hz) < 1e-15
        assert abs(model.a[2, 4] + printed / AREA.f0_hz) < 1e-15

    def test_angle_row(self):
        model = build_two_area_coupled((AREA, AREA), (BATTERY, BATTERY), TIE)
        expected = [2 * math.pi * 50.0, 0.0, -2 * math.pi * 50.0, 0.0, 0.0]
        assert np.allclose(model.a[4], expected, atol=0)

    def test_input_matrix_block_structure(self):
        model = build_two_area_coupled((AREA, AREA), (BATTERY, BATTERY), TIE)
        gain = AREA.input_gain / AREA.f0_hz
        assert np.allclose(model.b[0], [gain, gain, 0.0, 0.0], atol=0)
        assert np.allclose(model.b[2], [0.0, 0.0, gain, gain], atol=0)
        assert np.allclose(model.b[1], [0.0, -0.02, 0.0, 0.0], atol=0)
        assert np.allclose(model.b[3], [0.0, 0.0, 0.0, -0.02], atol=0)
        assert np.allclose(model.b[4], 0.0, atol=0)

    def test_rejects_mismatched_nominal_frequency(self):
        other = AreaParams(f0_hz=60.0)
        with pytest.raises(ValueError, match="nominal frequency"):
            build_two_area_coupled((AREA, other), (BATTERY, BATTERY), TIE)


class TestDiscretize:
    def test_scalar_frequency_entry(self):
        model = build_one_area(AREA, BATTERY)
        disc = discretize(model, 0.1)
        expected = math.exp(AREA.freq_decay * 0.1)
        assert abs(disc.a_d[0, 0] - expected) < 1e-12
        assert abs(expected - 0.9937698) < 1e-7
        assert disc.a_d[1, 1] == pytest.approx(1.0, abs=1e-14)

    def test_matches_quadrature_oracle(self):
        model = build_two_area_coupled((AREA, AREA), (BATTERY, BATTERY), TIE)
        ts = 0.1
        disc = discretize(model, ts)
        assert np.allclose(disc.a_d, scipy.linalg.expm(model.a * ts), atol=1e-12)
        # b_d = integral of expm(a tau) b over the sample period.
        taus = np.linspace(0.0, ts, 2001)
        stack = np.array([scipy.linalg.expm(model.a * t) @ model.b for t in taus])
        b_ref = np.trapezoid(stack, taus, axis=0)
        assert np.allclose(disc.b_d, b_ref, atol=1e-9)

    def test_decay_entries_in_unit_interval(self):
        battery = BatteryParams(self_discharge_pu=0.05)
        model = build_one_area(AREA, battery)
        disc = discretize(model, 0.1)
        diag = np.diag(disc.a_d)
        assert np.all(diag > 0.0)
        assert np.all(diag <= 1.0)

    def test_rejects_nonpositive_period(self):
        model = build_one_area(AREA, BATTERY)
        with pytest.raises(ValueError):
            discretize(model, 0.0)


class TestPlantDerivative:
    def test_one_area_matches_linear_model(self):
        plant = Plant(areas=(AREA,), batteries=(BATTERY,))
        model = build_one_area(AREA, BATTERY)
        rng = np.random.default_rng(9)
        for _ in range(10):
            x = rng.uniform(-0.05, 0.05, 2)
            u = rng.uniform(-0.2, 0.2, 2)
            deriv = plant_derivative(plant, x, u)
            assert np.allclose(deriv, model.a @ x + model.b @ u, atol=1e-15)

    def test_self_discharge_consistency(self):
        # the leak is proportional to the state of charge in the linear
        # model and in the plant alike
        leaky = BatteryParams(self_discharge_pu=0.4)
        plant = Plant(areas=(AREA,), batteries=(leaky,))
        model = build_one_area(AREA, leaky)
        x = np.array([0.0, 0.6])
        u = np.array([0.0, 0.05])
        deriv = plant_derivative(plant, x, u)
        assert np.allclose(deriv, model.a @ x + model.b @ u, atol=1e-15)
        assert deriv[1] == pytest.approx(-(0.4 * 0.6 + 0.05) / leaky.capacity_pu_s)

    def test_two_area_linearization_agreement(self):
        plant = Plant(areas=(AREA, AREA), batteries=(BATTERY, BATTERY), tie=TIE)
        model = build_two_area_coupled((AREA, AREA), (BATTERY, BATTERY), TIE)
        x = np.array([1e-6, 2e-6, -1e-6, 1e-6, 1e-6])
        u = np.zeros(4)
        deriv = plant_derivative(plant, x, u)
        linear = model.a @ x
        scale = np.max(np.abs(linear))
        assert np.max(np.abs(deriv - linear)) <= 1e-6 * scale

    def test_tie_power_antisymmetric(self):
        # Power leaving area 1 equals power entering area 2 even when the
        # areas themselves are differently sized.
        area2 = AreaParams(f0_hz=50.0, inertia_s=4.0, base_power_pu=2.0, load_damping=50.0)
        plant = Plant(areas=(AREA, area2), batteries=(BATTERY, BATTERY), tie=TIE)
        state = np.array([0.001, 0.0, -0.002, 0.0, 0.3])
        inputs = np.zeros(4)
        with_tie = plant_derivative(plant, state, inputs)
        no_tie = plant_derivative(
            Plant(areas=(AREA, area2), batteries=(BATTERY, BATTERY),
                  tie=TieLineParams(max_transfer_pu=1e-15)),
            state, inputs,
        )
        flow_1 = (with_tie[0] - no_tie[0]) / (AREA.input_gain / AREA.f0_hz)
        flow_2 = (with_tie[2] - no_tie[2]) / (area2.input_gain / area2.f0_hz)
        assert abs(flow_1 + tie_line_power(TIE, 0.3)) < 1e-12
        assert abs(flow_2 - tie_line_power(TIE, 0.3)) < 1e-12

    def test_sinusoidal_tie_power(self):
        assert tie_line_power(TIE, 0.0) == 0.0
        assert abs(tie_line_power(TIE, math.pi / 2) - 0.2) < 1e-15
        assert abs(tie_line_power(TIE, -math.pi / 2) + 0.2) < 1e-15


class TestPlantValidation:
    def test_two_areas_require_tie(self):
        with pytest.raises(ValueError, match="tie"):
            Plant(areas=(AREA, AREA), batteries=(BATTERY, BATTERY))

    def test_one_area_rejects_tie(self):
        with pytest.raises(ValueError):
            Plant(areas=(AREA,), batteries=(BATTERY,), tie=TIE)

    def test_label_layouts(self):
        one = Plant(areas=(AREA,), batteries=(BATTERY,))
        two = Plant(areas=(AREA, AREA), batteries=(BATTERY, BATTERY), tie=TIE)
        assert one.state_labels == ("freq_norm", "soc")
        assert two.state_labels[4] == "angle_diff"

    def test_continuous_model_validates_labels(self):
        with pytest.raises(ValueError):
            ContinuousModel(np.eye(2), np.eye(2), ("a",), ("u1", "u2"))
