import pytest
import torch

from taylornet.exceptions import SequenceStateError
from taylornet.gradcheck import gradcheck
from taylornet.residual_branch import ConvLstmCell, ConvLstmState, ResidualBranch


class TestConvLstmCell:
    def test_forget_bias_starts_at_one(self):
        cell = ConvLstmCell(2, 4)
        bias = cell.conv.bias
        assert bias is not None
        assert torch.equal(bias[4:8], torch.ones(4))
        assert torch.count_nonzero(bias[:4]) == 0
        assert torch.count_nonzero(bias[8:]) == 0

    def test_state_update(self):
        cell = ConvLstmCell(2, 3).double()
        x = torch.randn(1, 2, 5, 5, dtype=torch.float64)
        h = torch.randn(1, 3, 5, 5, dtype=torch.float64)
        c = torch.randn(1, 3, 5, 5, dtype=torch.float64)

        h_next, c_next = cell(x, h, c)
        gates = cell.gates(x, h)
        torch.testing.assert_close(c_next, gates.forget * c + gates.input * gates.candidate)
        torch.testing.assert_close(h_next, gates.output * torch.tanh(c_next))

    def test_gradients_match_finite_differences(self):
        report = gradcheck("convlstm_step", tolerance=1e-4)
        assert report.passed, report.describe()


class TestResidualBranch:
    def test_three_layers_by_default(self):
        assert len(ResidualBranch(4).layers) == 3

    def test_rollout_shapes(self):
        branch = ResidualBranch(4, num_layers=2)
        h = torch.randn(2, 4, 6, 6)
        state = branch.initial_state(h)
        for _ in range(3):
            state, top = branch(state, h)
        assert top.shape == h.shape
        assert len(state.hidden) == len(state.cell) == 2
        assert top is state.hidden[-1]

    def test_initial_state_is_zero(self):
        state = ResidualBranch(2).initial_state(torch.ones(1, 2, 4, 4))
        assert all(torch.count_nonzero(t) == 0 for t in (*state.hidden, *state.cell))

    def test_missing_state(self):
        with pytest.raises(SequenceStateError):
            ResidualBranch(2)(None, torch.zeros(1, 2, 4, 4))

    def test_state_of_another_shape(self):
        branch = ResidualBranch(2)
        state = branch.initial_state(torch.zeros(1, 2, 4, 4))
        with pytest.raises(ValueError, match="does not match"):
            branch(state, torch.zeros(1, 2, 6, 6))

    def test_wrong_channels(self):
        branch = ResidualBranch(2)
        state = branch.initial_state(torch.zeros(1, 2, 4, 4))
        with pytest.raises(ValueError, match="residual feature"):
            branch(state, torch.zeros(1, 3, 4, 4))


class TestConvLstmState:
    def test_dict_round_trip_detaches(self):
        hidden = (torch.ones(1, 2, 3, 3, requires_grad=True),)
        state = ConvLstmState(hidden, (torch.zeros(1, 2, 3, 3),))
        restored = ConvLstmState.from_dict(state.to_dict())
        assert torch.equal(restored.hidden[0], hidden[0].detach())
        assert not restored.hidden[0].requires_grad

    def test_mismatched_maps(self):
        with pytest.raises(ValueError):
            ConvLstmState.from_dict({"hidden": [torch.zeros(1, 2, 3, 3)], "cell": [torch.zeros(1, 2, 4, 4)]})


class TestResidualRollout:
    def test_resume_from_saved_state(self, tmp_path):
        branch = ResidualBranch(3, num_layers=2).double()
        inputs = torch.randn(5, 1, 3, 6, 6, dtype=torch.float64)
        state = branch.initial_state(inputs[0])
        for h in inputs[:3]:
            state, _ = branch(state, h)

        path = tmp_path / "state.pt"
        torch.save(state.to_dict(), path)
        restored = ConvLstmState.from_dict(torch.load(path, weights_only=True))

        for h in inputs[3:]:
            state, expected = branch(state, h)
            restored, actual = branch(restored, h)
            assert torch.equal(actual, expected)

    def test_zero_input_and_state_give_zero_output(self):
        branch = ResidualBranch(4)
        h = torch.zeros(2, 4, 5, 5)
        state, top = branch(branch.initial_state(h), h)
        assert torch.count_nonzero(top) == 0
        assert all(torch.count_nonzero(c) == 0 for c in state.cell)

    def test_gate_ranges(self):
        cell = ConvLstmCell(2, 3).double()
        x = 3 * torch.randn(4, 2, 6, 6, dtype=torch.float64)
        h = torch.randn(4, 3, 6, 6, dtype=torch.float64).tanh()
        gates = cell.gates(x, h)
        for gate in (gates.input, gates.forget, gates.output):
            assert gate.min() > 0
            assert gate.max() < 1
        assert gates.candidate.min() > -1
        assert gates.candidate.max() < 1

    def test_deterministic(self):
        inputs = torch.randn(4, 1, 2, 6, 6)

        def run() -> list[torch.Tensor]:
            torch.manual_seed(5)
            branch = ResidualBranch(2)
            state = branch.initial_state(inputs[0])
            outputs = []
            for h in inputs:
                state, top = branch(state, h)
                outputs.append(top)
            return outputs

        for a, b in zip(run(), run(), strict=True):
            assert torch.equal(a, b)
