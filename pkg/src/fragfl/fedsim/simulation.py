"""Round orchestration for fragmented FL and the plaintext baselines."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .. import crypto
from ..adversary import AttackerPlan, attacker_behavior, choose_attackers, flip_labels, poison_gaussian
from ..baselines import AggregatorChoice, aggregate
from ..defense import (
    ReputationState,
    adaptive_aggregate,
    compute_similarities,
    extract_mixed_gradient,
    select_participants,
    trust_vector,
    update_global_reputations,
    update_local_reputation,
)
from ..errors import AggregationError, DecryptionError, ProtocolError
from ..exchange import AcceptorSession, InitiatorSession, MixedSubmission, Transcript, self_submission, server_decrypt
from ..params import ParamWords, scale
from ..training import Dataset, Metrics, ModelSpec, TrainConfig, evaluate, load_csv, split_uniform, synth_dataset, train_local
from .bus import SERVER, Feedback, MessageBus, ModelBroadcast, PlainUpdate
from .config import SimConfig
from .pairing import Pairing, pair_participants

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# purpose tags for derived seeds
_SPLIT, _SELECT, _PAIR, _TRAIN, _NOISE, _CRYPTO, _ATTACKERS, _INIT = range(8)


def derive_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1, dtype=np.uint64)[0])


@dataclass
class RoundReport:
    round: int
    metrics: dict[str, Any]
    selected: list[str]
    gamma: dict[str, float]
    nu: dict[str, float]
    pairing: dict[str, str]
    self_submissions: list[str]
    rejected_submissions: list[str]
    bits: dict[str, dict]
    aggregation_failed: bool = False
    sim: dict[str, float] = field(default_factory=dict)
    feedback: dict[str, float] = field(default_factory=dict)
    attackers_selected: list[str] = field(default_factory=list)
    attacker_honest_pairs: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "round": self.round,
            "metrics": self.metrics,
            "selected": self.selected,
            "gamma": self.gamma,
            "nu": self.nu,
            "sim": self.sim,
            "feedback": self.feedback,
            "pairing": self.pairing,
            "self_submissions": self.self_submissions,
            "rejected_submissions": self.rejected_submissions,
            "aggregation_failed": self.aggregation_failed,
            "attackers_selected": self.attackers_selected,
            "attacker_honest_pairs": self.attacker_honest_pairs,
            "bits": self.bits,
        }


@dataclass
class _Local:
    """One selected participant's local result for the round."""

    honest: ParamWords  # scaled by d_k
    poisoned: ParamWords | None = None

    def plan(self, strategy: int) -> AttackerPlan:
        if self.poisoned is None:
            return AttackerPlan(self.honest, self.honest)
        return attacker_behavior(strategy, self.honest, self.poisoned)


class Simulation:
    """Holds global state across rounds; call :meth:`run_round` T times."""

    def __init__(self, config: SimConfig, keys: crypto.ServerKeyPair | None = None) -> None:
        self.config = config
        c = config
        self.participants = [f"p{i:02d}" for i in range(c.K)]
        self.train_data, self.test_data = self._load_data()
        parts = split_uniform(self.train_data, c.K, np.random.default_rng(derive_seed(c.seed, _SPLIT)))
        self.local_data: dict[str, Dataset] = dict(zip(self.participants, parts))
        self.d = {k: float(len(v)) for k, v in self.local_data.items()}
        self.spec = ModelSpec(
            c.model.kind, self.train_data.n_features, self.train_data.n_classes, c.model.hidden if c.model.kind == "mlp1" else 0
        )
        self.W = self.spec.init_params(derive_seed(c.seed, _INIT))
        self.attackers: list[str] = []
        if c.attack is not None:
            self.attackers = choose_attackers(
                self.participants, c.attack.attacker_fraction, np.random.default_rng(derive_seed(c.seed, _ATTACKERS, c.attack.seed))
            )
        self.flipped = {}
        if c.attack is not None and c.attack.kind == "label_flip":
            self.flipped = {k: flip_labels(self.local_data[k], c.attack.src, c.attack.tgt) for k in self.attackers}
        self.state = ReputationState.initial(self.participants)
        self.group = crypto.get_group(c.dh_group, allow_test=True)
        self.keys = keys or crypto.ServerKeyPair.generate(c.rsa_bits)
        self.bus = MessageBus(self.spec.layout, self.group)
        self.aggregator = AggregatorChoice(c.defense, c.trim_beta, c.krum_f, c.krum_m)
        self.round_index = 0
        self.transcripts: list[Transcript] = []
        self.keep_transcripts = False

    # -- setup ----------------------------------------------------------------

    def _load_data(self) -> tuple[Dataset, Dataset]:
        ds = self.config.dataset
        if ds.kind == "synthetic":
            train = synth_dataset(ds.seed, ds.n_train, ds.d, ds.z, ds.separation, "train")
            test = synth_dataset(ds.seed, ds.n_test, ds.d, ds.z, ds.separation, "test")
            return train, test
        schema = {"n_classes": ds.n_classes} if ds.n_classes else {}
        train = load_csv(ds.train_path, {**schema, "split": "train"})
        test = load_csv(ds.test_path, {**schema, "split": "test"})
        z = max(train.n_classes, test.n_classes)
        return Dataset(train.features, train.labels, z, "train"), Dataset(test.features, test.labels, z, "test")

    def _rng(self, purpose: int, *extra: int) -> np.random.Generator:
        return np.random.default_rng(derive_seed(self.config.seed, purpose, self.round_index, *extra))

    def _crypto_rng(self, k: str) -> crypto.RandomSource:
        if self.config.crypto_rng == "system":
            return crypto.SystemRandom()
        return crypto.DeterministicRandom(f"{self.config.seed}/{self.round_index}/{k}")

    def _train(self, k: str, W: ParamWords) -> _Local:
        c = self.config
        idx = self.participants.index(k)
        cfg = TrainConfig(c.E, c.BS, c.eta, c.momentum, derive_seed(c.seed, _TRAIN, self.round_index, idx))
        honest = train_local(W, self.local_data[k], cfg, self.spec)
        poisoned = None
        if k in self.attackers:
            if c.attack.kind == "gaussian":
                noise_rng = self._rng(_NOISE, idx, c.attack.seed)
                poisoned = poison_gaussian(honest, c.attack.sigma, noise_rng)
            else:
                poisoned = train_local(W, self.flipped[k], cfg, self.spec)
            poisoned = scale(poisoned, self.d[k])
        return _Local(scale(honest, self.d[k]), poisoned)

    # -- rounds ---------------------------------------------------------------

    def run_round(self) -> RoundReport:
        if self.config.defense == "ffl":
            report = self._ffl_round()
        else:
            report = self._baseline_round()
        self.round_index += 1
        return report

    def _evaluate(self) -> Metrics:
        return evaluate(self.W, self.test_data, self.spec, self.config.src_class, self.config.tgt_class)

    def _broadcast(self, S: list[str]) -> dict[str, ParamWords]:
        received = {}
        for k in S:
            msg = self.bus.deliver(SERVER, k, ModelBroadcast(self.round_index, self.W))
            received[k] = msg.model
        return received

    def _baseline_round(self) -> RoundReport:
        c = self.config
        n = max(math.floor(c.C * c.K), 1)
        pick = self._rng(_SELECT).choice(c.K, size=n, replace=False)
        S = sorted(self.participants[i] for i in pick)
        models = self._broadcast(S)
        updates, weights = [], []
        for k in S:
            local = self._train(k, models[k])
            sent = local.poisoned if local.poisoned is not None else local.honest
            msg = self.bus.deliver(k, SERVER, PlainUpdate(k, sent))
            updates.append(msg.update.floats64() / self.d[k])
            weights.append(self.d[k])
        self.W = ParamWords.from_floats(aggregate(self.aggregator, updates, weights), self.spec.layout)
        return RoundReport(
            round=self.round_index,
            metrics=self._evaluate().to_dict(),
            selected=S,
            gamma=dict(self.state.gamma),
            nu={},
            pairing={},
            self_submissions=[],
            rejected_submissions=[],
            bits=self.bus.reset(),
            attackers_selected=[k for k in S if k in self.attackers],
        )

    def _exchange_pair(
        self, k: str, j: str, plans: dict[str, AttackerPlan]
    ) -> tuple[MixedSubmission, MixedSubmission]:
        pk = self.keys.public_key
        sid = f"r{self.round_index}:{k}:{j}"
        init = InitiatorSession(sid, k, plans[k].mix_update, pk, self.group, self._crypto_rng(k), plans[k].exchange_update)
        acc = AcceptorSession(sid, j, plans[j].mix_update, pk, self.group, self._crypto_rng(j), plans[j].exchange_update)
        hello = self.bus.deliver(k, j, init.hello())
        payload = self.bus.deliver(j, k, acc.respond(hello))
        sub_k, ret = init.finalize(payload)
        sub_j = acc.finalize(self.bus.deliver(k, j, ret))
        if self.keep_transcripts:
            self.transcripts.extend([init.transcript, acc.transcript])
        return sub_k, sub_j

    def _ffl_round(self) -> RoundReport:
        c = self.config
        strategy = c.attack.strategy if c.attack else 1
        S = select_participants(c.C, self.state.gamma, self._rng(_SELECT))
        models = self._broadcast(S)
        locals_ = {k: self._train(k, models[k]) for k in S}
        plans = {k: locals_[k].plan(strategy) for k in S}

        pairing = pair_participants(S, self.state.zeta, self._rng(_PAIR))
        submissions: dict[str, MixedSubmission] = {}
        solo = list(pairing.unmatched)
        for k, j in pairing.pairs:
            try:
                submissions[k], submissions[j] = self._exchange_pair(k, j, plans)
            except ProtocolError as exc:
                log.warning("session %s/%s aborted: %s", k, j, exc)
                solo.extend([k, j])
        partner = {k: pairing.partner_of(k) for k in S}
        for k in solo:
            partner[k] = None
            plan = plans[k]
            own = plan.direct_submission if plan.direct_submission is not None else plan.mix_update
            submissions[k] = self_submission(k, own, self.keys.public_key, self._crypto_rng(k), f"r{self.round_index}:{k}")
        for k in S:
            plan = plans[k]
            if plan.direct_submission is not None and k not in solo:
                submissions[k] = self_submission(
                    k, plan.direct_submission, self.keys.public_key, self._crypto_rng(k + "/direct"), f"r{self.round_index}:{k}"
                )

        # server side
        mixes: dict[str, ParamWords] = {}
        rejected = []
        for k in S:
            sub = self.bus.deliver(k, SERVER, submissions[k])
            try:
                mixes[sub.sender] = server_decrypt(sub, self.keys)
            except DecryptionError:
                rejected.append(sub.sender)
        accepted = sorted(mixes)

        sims: dict[str, float] = {}
        deltas: dict[str, float] = {}
        if len(accepted) >= 2:
            W_t = self.W.floats64()
            grads = [extract_mixed_gradient(W_t, mixes[k].floats64() / self.d[k], c.eta) for k in accepted]
            breakdown = compute_similarities(grads, self.spec.layout, c.alpha)
            sims = dict(zip(accepted, breakdown.sim.tolist()))
            deltas = update_global_reputations(self.state, accepted, breakdown.sim)
        for k in accepted:
            if k not in deltas:
                continue
            fb = self.bus.deliver(SERVER, k, Feedback(self.round_index, deltas[k]))
            update_local_reputation(self.state.zeta[k], partner.get(k), fb.delta)

        nu_all = trust_vector(self.state.gamma)
        self.state.trust = nu_all
        nu = {k: (1.0 if c.force_unit_trust else nu_all[k]) for k in accepted}
        failed = False
        try:
            new = adaptive_aggregate([mixes[k].floats64() for k in accepted], [nu[k] for k in accepted], [self.d[k] for k in accepted])
            self.W = ParamWords.from_floats(new, self.spec.layout)
        except (AggregationError, ValueError) as exc:
            log.info("round %d: aggregation failed (%s); keeping previous model", self.round_index, exc)
            failed = True

        att_sel = [k for k in S if k in self.attackers]
        honest_pairs = sum(
            1 for a, b in pairing.pairs if (a in self.attackers) != (b in self.attackers)
        )
        return RoundReport(
            round=self.round_index,
            metrics=self._evaluate().to_dict(),
            selected=S,
            gamma=dict(self.state.gamma),
            nu=dict(nu_all),
            pairing=pairing.as_map(),
            self_submissions=sorted(solo),
            rejected_submissions=rejected,
            bits=self.bus.reset(),
            aggregation_failed=failed,
            sim=sims,
            feedback=deltas,
            attackers_selected=att_sel,
            attacker_honest_pairs=honest_pairs,
        )

    def run(self) -> "SimulationReport":
        rounds = [self.run_round() for _ in range(self.config.T - self.round_index)]
        return SimulationReport(self.config, self.attackers, rounds)


@dataclass
class SimulationReport:
    config: SimConfig
    attackers: list[str]
    rounds: list[RoundReport]

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config.to_dict(),
            "attackers": self.attackers,
            "rounds": [r.to_dict() for r in self.rounds],
        }

    @property
    def final_metrics(self) -> dict[str, Any]:
        return self.rounds[-1].metrics


def run_simulation(config: SimConfig, keys: crypto.ServerKeyPair | None = None) -> SimulationReport:
    return Simulation(config, keys).run()
