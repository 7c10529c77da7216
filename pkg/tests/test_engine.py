"""End-to-end and unit tests for the discrete-event simulator."""

import math
import random

import pytest

from swarmheal.adversary import (
    EXTERNAL,
    INTERNAL,
    ISLAND,
    UNIFORM,
    AdversaryConfig,
)
from swarmheal.engine import (
    CSV_HEADER,
    Engine,
    ImageSpec,
    Scenario,
    UpdateConfig,
    mean_samples,
    run_batch,
    run_scenario,
    sample_exponential,
    samples_to_csv,
)
from swarmheal.protocol import BLANK, CORRUPT, HONEST, ProtocolParams
from swarmheal.topology import Topology, gen_mesh, gen_tree


SMALL_IMAGE = ImageSpec(chunk_size=16, chunk_count=8)


def line_topology(n: int) -> Topology:
    adj = tuple(
        tuple(j for j in (i - 1, i + 1) if 0 <= j < n) for i in range(n)
    )
    return Topology(
        ids=tuple(range(n)),
        pos=tuple((float(i), 0.0) for i in range(n)),
        klass=("LR",) * n,
        adj=adj,
    )


def small_mesh(seed: int = 7) -> Topology:
    return gen_mesh(64, 1000.0, 220.0, random.Random(seed))


def internal_scenario(topo, *, ttl=1, halt=None, ids=None, duration=600.0,
                      bogus=False, f=0.0, image=SMALL_IMAGE, update=None):
    adv = AdversaryConfig(
        mode=INTERNAL,
        frac_initial=f,
        placement=UNIFORM,
        lam_internal=1 / 100,
        halt_spread_at=halt,
        initial_corrupt_ids=ids,
        bogus_responders=bogus,
    )
    return Scenario(
        topology=topo,
        params=ProtocolParams(ttl=ttl),
        adversary=adv,
        update=update,
        image=image,
        duration=duration,
    )


class TestSampling:
    def test_exponential_mean_within_one_percent(self):
        rng = random.Random(12345)
        n = 10**6
        total = 0.0
        for _ in range(n):
            total += sample_exponential(1 / 100, rng)
        assert abs(total / n - 100.0) < 1.0

    def test_rate_must_be_positive(self):
        rng = random.Random(0)
        with pytest.raises(ValueError):
            sample_exponential(0.0, rng)
        with pytest.raises(ValueError):
            sample_exponential(-1.0, rng)

    def test_selfcheck_cap_bounds_every_draw(self):
        topo = line_topology(1)
        sc = Scenario(
            topology=topo,
            params=ProtocolParams(lam_init=1 / 10000, lam_min=1 / 10000,
                                  lam_max=1 / 100, selfcheck_cap=50.0),
            adversary=AdversaryConfig(),
            update=None,
            image=SMALL_IMAGE,
            duration=10.0,
        )
        eng = Engine(sc, seed=3)
        dev = eng.devices[0]
        for _ in range(300):
            before = eng.now
            dev.schedule_selfcheck()
            t, _, _, args = max(e for e in eng._heap if e[2] == dev.on_selfcheck_interrupt and e[3] == (dev.selfcheck_gen,))
            assert t - before <= 50.0 + 1e-12

    def test_uncapped_rate_draws_exceed_cap_sometimes(self):
        # sanity that the cap in the previous test was load-bearing
        rng = random.Random(1)
        draws = [sample_exponential(1 / 10000, rng) for _ in range(50)]
        assert max(draws) > 50.0


class TestDeterminismAndConservation:
    def test_same_seed_byte_identical(self):
        sc = internal_scenario(small_mesh(), f=0.30, duration=300.0)
        a = run_scenario(sc, 5)
        b = run_scenario(sc, 5)
        assert a.to_csv() == b.to_csv()

    def test_different_seeds_differ(self):
        sc = internal_scenario(small_mesh(), f=0.30, duration=300.0)
        a = run_scenario(sc, 5)
        b = run_scenario(sc, 6)
        assert a.to_csv() != b.to_csv()

    def test_fractions_conserve_and_bound(self):
        sc = internal_scenario(small_mesh(), f=0.30, duration=300.0)
        tl = run_scenario(sc, 2)
        for row in tl.samples:
            assert 0.0 <= row.frac_updated <= 1.0
            total = row.frac_corrupt_undetected + row.frac_blank + row.frac_correct
            assert math.isclose(total, 1.0, abs_tol=1e-12)

    def test_csv_header_and_row_count(self):
        sc = internal_scenario(line_topology(3), duration=10.0)
        tl = run_scenario(sc, 0)
        lines = tl.to_csv().splitlines()
        assert lines[0] == CSV_HEADER
        assert lines[0] == "time,frac_corrupt_undetected,frac_blank,frac_correct,frac_updated"
        assert len(lines) == 1 + 11  # samples at 0..10 inclusive

    def test_write_csv_round_trip(self, tmp_path):
        sc = internal_scenario(line_topology(2), duration=5.0)
        tl = run_scenario(sc, 0)
        path = tmp_path / "out.csv"
        tl.write_csv(path)
        assert path.read_text() == tl.to_csv()

    def test_no_adversary_all_correct_forever(self):
        sc = Scenario(
            topology=line_topology(4),
            params=ProtocolParams(),
            adversary=AdversaryConfig(),
            update=None,
            image=SMALL_IMAGE,
            duration=50.0,
        )
        tl = run_scenario(sc, 1)
        assert all(row.frac_correct == 1.0 for row in tl.samples)

    def test_mean_samples_requires_aligned_grids(self):
        sc = internal_scenario(line_topology(2), duration=5.0)
        tl = run_scenario(sc, 0)
        short = tl.samples[:-1]
        with pytest.raises(ValueError):
            mean_samples([tl.samples, short])

    def test_batch_mean_is_pointwise(self):
        sc = internal_scenario(small_mesh(), f=0.30, duration=60.0)
        tls = run_batch(sc, [0, 1])
        mean = mean_samples([tl.samples for tl in tls])
        for row, a, b in zip(mean, tls[0].samples, tls[1].samples):
            assert math.isclose(
                row.frac_correct, (a.frac_correct + b.frac_correct) / 2, abs_tol=1e-12
            )


class TestRecovery:
    def test_halted_spread_recovers_everyone(self):
        sc = internal_scenario(small_mesh(), f=0.30, halt=0.0, duration=1500.0)
        tl = run_scenario(sc, 0)
        assert tl.final.frac_correct == 1.0
        # halt at zero means exactly the seeded corruptions happen
        assert tl.stats["corruptions"] == round(0.30 * 64)
        assert tl.stats["tampered_install"] == 0

    def test_unhalted_spread_adds_corruptions(self):
        sc = internal_scenario(small_mesh(), f=0.30, duration=400.0)
        tl = run_scenario(sc, 0)
        assert tl.stats["corruptions"] > round(0.30 * 64)

    def test_halt_time_gates_new_corruptions(self):
        sc = internal_scenario(small_mesh(), f=0.30, halt=100.0, duration=500.0)
        tl = run_scenario(sc, 3)
        corrupt_times = [t for t, _, old, new in tl.transitions if new == CORRUPT]
        assert all(t <= 100.0 for t in corrupt_times)

    def test_chain_recovery_orders_by_distance_to_holder(self):
        # A(honest) - B - C: C's only path to good code runs through B
        sc = internal_scenario(line_topology(3), ids=(1, 2), halt=0.0,
                               duration=1500.0)
        tl = run_scenario(sc, 1)
        assert tl.final.frac_correct == 1.0
        healed = {dev: t for t, dev, old, new in tl.transitions
                  if old == BLANK and new == HONEST}
        assert healed[1] < healed[2]

    def test_blank_devices_cannot_be_corrupted(self):
        sc = internal_scenario(line_topology(2), duration=10.0)
        eng = Engine(sc, seed=0)
        dev = eng.devices[0]
        assert eng.corrupt_device(dev) is True
        dev.become_blank()
        assert dev.status == BLANK
        assert eng.corrupt_device(dev) is False
        assert dev.status == BLANK
        assert eng.stats["corruptions"] == 1

    def test_unlocalized_chunk_forces_full_image_fallback(self):
        sc = internal_scenario(line_topology(2), duration=1500.0)
        eng = Engine(sc, seed=2)
        victim = eng.devices[1]
        assert eng.corrupt_device(victim)
        victim.become_blank()
        assert len(victim.pi) >= 2
        victim.pi.discard(max(victim.pi))  # hide one tampered chunk from recovery
        tl = eng.run()
        assert tl.stats["reattest_failed_full_image"] >= 1
        assert tl.final.frac_correct == 1.0
        assert victim.image == eng.certified[1]


class TestExternalAdversary:
    def scenario(self, cap=None, duration=700.0):
        params = ProtocolParams(ttl=1, selfcheck_cap=cap)
        adv = AdversaryConfig(mode=EXTERNAL, lam_external=1 / 100,
                              disconnect_at=300.0)
        return Scenario(topology=small_mesh(), params=params, adversary=adv,
                        update=None, image=SMALL_IMAGE, duration=duration)

    def test_each_device_hit_at_most_once(self):
        tl = run_scenario(self.scenario(), 4)
        hits = {}
        for t, dev, old, new in tl.transitions:
            if new == CORRUPT:
                hits[dev] = hits.get(dev, 0) + 1
        assert hits and max(hits.values()) == 1

    def test_no_corruption_after_disconnect(self):
        tl = run_scenario(self.scenario(), 4)
        assert tl.last_corruption_time < 300.0
        assert tl.final.frac_correct == 1.0

    def test_island_placement_rejected_for_external(self):
        with pytest.raises(ValueError):
            AdversaryConfig(mode=EXTERNAL, lam_external=1 / 100,
                            placement=ISLAND)


class TestUpdates:
    def test_update_chain_propagates_to_all(self):
        sc = Scenario(
            topology=line_topology(5),
            params=ProtocolParams(),
            adversary=AdversaryConfig(),
            update=UpdateConfig(at=10.0),
            image=SMALL_IMAGE,
            duration=400.0,
        )
        tl = run_scenario(sc, 0)
        assert tl.final.frac_updated == 1.0
        fracs = [row.frac_updated for row in tl.samples]
        assert all(b >= a for a, b in zip(fracs, fracs[1:]))

    def test_update_stalls_then_resumes_after_recovery(self):
        sc = internal_scenario(
            line_topology(3), ids=(1,), halt=0.0, duration=1500.0,
            update=UpdateConfig(at=5.0, retry_interval=5.0),
        )
        tl = run_scenario(sc, 1)
        assert tl.final.frac_updated == 1.0
        healed = [t for t, dev, old, new in tl.transitions
                  if dev == 1 and new == HONEST]
        assert healed
        by_time = {row.time: row.frac_updated for row in tl.samples}
        before = by_time[math.floor(healed[0])]
        assert before < 1.0
        assert tl.final.frac_updated > before

    def test_operator_retries_after_corrupt_pick(self):
        # scan seeds for a run whose first operator pick is the corrupt device
        for seed in range(40):
            sc = internal_scenario(
                line_topology(2), ids=(0,), halt=0.0, duration=400.0,
                update=UpdateConfig(at=1.0, retry_interval=7.0),
            )
            tl = run_scenario(sc, seed)
            assert tl.final.frac_updated == 1.0
            if tl.update_trials[0][2] == CORRUPT:
                t0 = tl.update_trials[0][0]
                t1 = tl.update_trials[1][0]
                assert math.isclose(t1 - t0, 7.0, abs_tol=1e-9)
                break
        else:
            pytest.fail("no seed produced a corrupt first pick")


class TestBogusResponders:
    def test_bogus_chunks_never_install(self):
        rejected = 0
        sent = 0
        for seed in range(10):
            sc = internal_scenario(line_topology(3), ids=(1, 2), halt=0.0,
                                   bogus=True, duration=900.0)
            tl = run_scenario(sc, seed)
            assert tl.stats["tampered_install"] == 0
            assert tl.final.frac_correct == 1.0
            sent += tl.stats["bogus_first_sent"]
            rejected += tl.stats["bogus_first_rejected"]
        assert sent > 0
        assert rejected > 0


class TestValidation:
    def test_engine_rejects_relay_class_layouts(self):
        topo = Topology(
            ids=(0, 1),
            pos=((0.0, 0.0), (1.0, 0.0)),
            klass=("LR", "HR"),
            adj=((1,), (0,)),
        )
        sc = Scenario(topology=topo, params=ProtocolParams(),
                      adversary=AdversaryConfig(), update=None,
                      image=SMALL_IMAGE, duration=10.0)
        with pytest.raises(ValueError):
            Engine(sc, seed=0)

    def test_scenario_duration_positive(self):
        with pytest.raises(ValueError):
            Scenario(topology=line_topology(2), params=ProtocolParams(),
                     adversary=AdversaryConfig(), update=None,
                     image=SMALL_IMAGE, duration=0.0)

    def test_update_config_validation(self):
        with pytest.raises(ValueError):
            UpdateConfig(at=-1.0)
        with pytest.raises(ValueError):
            UpdateConfig(at=5.0, retry_interval=0.0)

    def test_image_spec_validation(self):
        with pytest.raises(ValueError):
            ImageSpec(chunk_size=0)
        with pytest.raises(ValueError):
            ImageSpec(chunk_count=0)

    def test_internal_mode_needs_seeds_or_rate(self):
        with pytest.raises(ValueError):
            AdversaryConfig(mode=INTERNAL)

    def test_schedule_into_past_rejected(self):
        sc = internal_scenario(line_topology(2), duration=10.0)
        eng = Engine(sc, seed=0)
        eng._now = 5.0
        with pytest.raises(ValueError):
            eng.schedule_at(4.0, lambda: None)

    def test_samples_to_csv_header_only_for_empty(self):
        assert samples_to_csv([]) == CSV_HEADER + "\n"
