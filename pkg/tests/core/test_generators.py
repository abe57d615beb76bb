import numpy as np
import pytest
import torch

from taylornet.core.config import get_preset
from taylornet.core.models import BounceSpec, BouncingObject
from taylornet.data.generators import (
    MovingDigitsDataset,
    generate_bouncing,
    generate_moving_digits,
    generate_translating_bump,
    object_trajectory,
    pixel_mass,
    reflect_step,
    sample_bounce_spec,
)


def _square(size: int = 4) -> np.ndarray:
    return np.ones((size, size), dtype=np.float32)


class TestReflection:
    def test_wall_hit_then_bounce(self):
        position, velocity = reflect_step(5.0, 3.0, 8.0)
        assert (position, velocity) == (8.0, 3.0)
        position, velocity = reflect_step(position, velocity, 8.0)
        assert (position, velocity) == (5.0, -3.0)

    def test_low_wall(self):
        assert reflect_step(1.0, -3.0, 8.0) == (2.0, 3.0)

    def test_zero_velocity(self):
        obj = BouncingObject(_square(), (3.0, 5.0), (0.0, 0.0))
        assert object_trajectory(obj, (16, 16), 4) == [(3.0, 5.0)] * 4

    def test_ten_thousand_trajectories_stay_in_canvas(self):
        rng = np.random.default_rng(0)
        sprites = np.ones((10, 6, 6), dtype=np.float32)
        for _ in range(10_000):
            spec = sample_bounce_spec(rng, sprites, canvas=20, num_digits=1, length=20, max_speed=4.0)
            for x, y in object_trajectory(spec.objects[0], spec.canvas, spec.length):
                assert 0.0 <= x <= 14.0
                assert 0.0 <= y <= 14.0


class TestBouncing:
    def test_render_shape_and_range(self):
        spec = BounceSpec((16, 12), (BouncingObject(_square(), (2.0, 3.0), (1.0, 1.0)),), 5)
        batch = generate_bouncing(spec, seed=7)
        assert batch.shape == (1, 5, 1, 16, 12)
        assert batch.seed == 7
        assert batch.frames.max() == 1.0

    def test_positions_truncate_to_pixels(self):
        spec = BounceSpec((8, 8), (BouncingObject(_square(2), (2.7, 1.2), (0.0, 0.0)),), 1)
        frame = generate_bouncing(spec).frames[0, 0, 0]
        assert frame[1:3, 2:4].sum() == 4.0
        assert frame.sum() == 4.0

    def test_overlap_takes_the_maximum(self):
        dim = np.full((4, 4), 0.25, dtype=np.float32)
        spec = BounceSpec(
            (8, 8),
            (BouncingObject(dim, (0.0, 0.0), (0.0, 0.0)), BouncingObject(_square(), (2.0, 2.0), (0.0, 0.0))),
            1,
        )
        frame = generate_bouncing(spec).frames[0, 0, 0]
        assert frame[2, 2] == 1.0
        assert frame[0, 0] == 0.25

    def test_sprite_larger_than_canvas(self):
        spec = BounceSpec((4, 4), (BouncingObject(_square(6), (0.0, 0.0), (1.0, 0.0)),), 3)
        with pytest.raises(ValueError, match="does not fit"):
            generate_bouncing(spec)

    def test_empty_length(self):
        with pytest.raises(ValueError):
            generate_bouncing(BounceSpec((8, 8), (), 0))


class TestMovingDigits:
    def test_same_seed_same_frames(self, sprites):
        preset = get_preset("tiny")
        a = generate_moving_digits(sprites, preset, batch_size=3, length=6, seed=11)
        b = generate_moving_digits(sprites, preset, batch_size=3, length=6, seed=11)
        assert torch.equal(a.frames, b.frames)
        assert a.shape == (3, 6, 1, 32, 32)

    def test_different_seed_different_frames(self, sprites):
        preset = get_preset("tiny")
        a = generate_moving_digits(sprites, preset, batch_size=2, length=4, seed=1)
        b = generate_moving_digits(sprites, preset, batch_size=2, length=4, seed=2)
        assert not torch.equal(a.frames, b.frames)

    def test_start_index_selects_later_sequences(self, sprites):
        preset = get_preset("tiny")
        full = generate_moving_digits(sprites, preset, batch_size=4, length=4, seed=5)
        tail = generate_moving_digits(sprites, preset, batch_size=2, length=4, seed=5, start_index=2)
        assert torch.equal(full.frames[2:], tail.frames)

    def test_dataset_items(self, sprites):
        dataset = MovingDigitsDataset(sprites, get_preset("tiny"), length=5, size=3, seed=0)
        assert len(dataset) == 3
        assert dataset[1].shape == (5, 1, 32, 32)
        assert torch.equal(dataset[1], dataset[1])
        with pytest.raises(IndexError):
            dataset[3]

    def test_epochs_draw_new_sequences(self, sprites):
        preset = get_preset("tiny")
        first = MovingDigitsDataset(sprites, preset, length=4, size=1, seed=0, epoch=0)
        second = MovingDigitsDataset(sprites, preset, length=4, size=1, seed=0, epoch=1)
        assert not torch.equal(first[0], second[0])

    def test_fixed_data_ignores_epoch(self, sprites):
        preset = get_preset("overfit")
        first = MovingDigitsDataset(sprites, preset, length=4, size=1, seed=0, epoch=0)
        later = MovingDigitsDataset(sprites, preset, length=4, size=1, seed=0, epoch=9)
        assert torch.equal(first[0], later[0])


class TestTranslatingBump:
    def test_moves_one_column_per_frame(self):
        frames = generate_translating_bump(32, (1.0, 0.0), 3, center=(12.0, 16.0)).frames[0, :, 0]
        columns = [int(frame.max(dim=0).values.argmax()) for frame in frames]
        assert columns == [12, 13, 14]
        rows = [int(frame.max(dim=1).values.argmax()) for frame in frames]
        assert rows == [16, 16, 16]

    def test_mass_is_conserved(self):
        frames = generate_translating_bump(64, (1.5, -0.5), 20).frames[0]
        masses = pixel_mass(frames)
        assert max(masses) - min(masses) < 1e-6

    def test_default_center_keeps_path_centered(self):
        batch = generate_translating_bump(32, (0.5, 0.5), 9)
        assert batch.frames.dtype == torch.float64
        middle = batch.frames[0, 4, 0]
        assert divmod(int(middle.argmax()), 32) in {(15, 15), (15, 16), (16, 15), (16, 16)}

    def test_leaving_the_canvas(self):
        with pytest.raises(ValueError, match="leaves"):
            generate_translating_bump(32, (3.0, 0.0), 20)
