"""Fault classification posed as a reinforcement-learning problem.

Each episode is one shuffled pass over the training examples: the state is
an example's input vector, the action is a class guess, and the reward is
read from a 3x3 reward matrix indexed ``[actual][predicted]``. Two DQN
training regimes share the same update: an epoch loop (one episode per
epoch) and a timestep loop counted in environment interactions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from ._validation import check_features, check_fitted_net, check_labels
from .exceptions import (
    InvalidParamError,
    NotEnoughExperienceError,
    ParseError,
    StepAfterDoneError,
)
from .nn import (
    AdamState,
    HyperParams,
    Mlp,
    adam_update_,
    forward,
    init_mlp,
    loss_and_gradients,
    squared_q_head,
)
from .signal import N_CLASSES, FaultClass

DEFAULT_TIMESTEPS = 160_000
DEFAULT_BUFFER_CAPACITY = 10_000

TABLE6_REWARDS = (
    (1.0, -1.2, -1.0),
    (-1.2, 1.0, -0.5),
    (-1.0, -0.5, 1.0),
)


@dataclass(frozen=True)
class RewardMatrix:
    """Payoff for predicting column class when the row class is true.

    Rows and columns follow :class:`FaultClass` order (developing_fault,
    faulty, healthy). Each diagonal entry must beat every other entry in its
    row, so the best-paying answer is always the correct one.
    """

    values: tuple = TABLE6_REWARDS

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.shape != (N_CLASSES, N_CLASSES) or not np.all(np.isfinite(arr)):
            raise InvalidParamError("reward matrix must be a finite 3x3 table")
        for i in range(N_CLASSES):
            off = np.delete(arr[i], i)
            if not np.all(arr[i, i] > off):
                raise InvalidParamError(f"row {FaultClass(i).slug}: diagonal must exceed off-diagonal rewards")
        object.__setattr__(self, "values", tuple(tuple(float(v) for v in row) for row in arr))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.values, dtype=np.float64)

    def lookup(self, actual, predicted) -> float:
        return self.values[int(actual)][int(predicted)]

    @classmethod
    def default(cls) -> RewardMatrix:
        return cls(tuple(tuple(1.0 if i == j else -1.0 for j in range(N_CLASSES)) for i in range(N_CLASSES)))

    @classmethod
    def table6(cls) -> RewardMatrix:
        return cls(TABLE6_REWARDS)

    @classmethod
    def from_csv(cls, path) -> RewardMatrix:
        """Three comma-separated rows in class-index order; ``#`` lines skipped."""
        path = Path(path)
        rows = []
        with path.open(newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                try:
                    rows.append([float(v) for v in row])
                except ValueError as exc:
                    raise ParseError(path, f"line {lineno}", str(exc)) from None
        return cls(tuple(map(tuple, rows)))

    def to_csv(self) -> str:
        return "\n".join(",".join(repr(v) for v in row) for row in self.values) + "\n"


def reward_lookup(matrix: RewardMatrix, actual, predicted) -> float:
    return matrix.lookup(actual, predicted)


def default_reward_matrix() -> RewardMatrix:
    return RewardMatrix.default()


def table6_reward_matrix() -> RewardMatrix:
    return RewardMatrix.table6()


# --------------------------------------------------------------------------
# Experience replay

@dataclass(frozen=True, eq=False)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray | None
    done: bool


@dataclass(frozen=True, eq=False)
class TransitionBatch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray  # zeros where done
    dones: np.ndarray

    def __len__(self):
        return self.actions.size


class ReplayBuffer:
    """Fixed-capacity FIFO of transitions backed by preallocated arrays."""

    def __init__(self, capacity: int = DEFAULT_BUFFER_CAPACITY):
        if capacity < 1:
            raise InvalidParamError("capacity must be >= 1")
        self.capacity = capacity
        self._size = 0
        self._next = 0  # slot the next push writes to
        self._states = None

    def __len__(self):
        return self._size

    def _allocate(self, dim):
        self._states = np.zeros((self.capacity, dim))
        self._next_states = np.zeros((self.capacity, dim))
        self._actions = np.zeros(self.capacity, dtype=np.int64)
        self._rewards = np.zeros(self.capacity)
        self._dones = np.zeros(self.capacity, dtype=bool)

    def push(self, t: Transition) -> None:
        state = np.asarray(t.state, dtype=np.float64).ravel()
        if self._states is None:
            self._allocate(state.size)
        elif state.size != self._states.shape[1]:
            raise InvalidParamError(f"state has {state.size} values, buffer stores {self._states.shape[1]}")
        i = self._next
        self._states[i] = state
        self._actions[i] = t.action
        self._rewards[i] = t.reward
        self._dones[i] = t.done
        if t.done or t.next_state is None:
            self._next_states[i] = 0.0
            self._dones[i] = True
        else:
            self._next_states[i] = t.next_state
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _order(self) -> np.ndarray:
        """Slot indices from oldest to newest."""
        start = (self._next - self._size) % self.capacity
        return (start + np.arange(self._size)) % self.capacity

    def transitions(self) -> list[Transition]:
        return [self._transition(i) for i in self._order()]

    def _transition(self, i) -> Transition:
        done = bool(self._dones[i])
        return Transition(
            self._states[i].copy(),
            int(self._actions[i]),
            float(self._rewards[i]),
            None if done else self._next_states[i].copy(),
            done,
        )

    def sample(self, batch_size: int, rng: np.random.Generator) -> TransitionBatch:
        """Uniform draw without replacement inside the batch."""
        if batch_size > self._size or batch_size < 1:
            raise NotEnoughExperienceError(self._size, batch_size)
        # occupied slots are always 0..size-1, so slot indices can be drawn directly
        idx = rng.choice(self._size, size=batch_size, replace=False)
        return TransitionBatch(
            self._states[idx],
            self._actions[idx],
            self._rewards[idx],
            self._next_states[idx],
            self._dones[idx],
        )


def buffer_push(buf: ReplayBuffer, t: Transition) -> None:
    buf.push(t)


def buffer_sample(buf: ReplayBuffer, batch_size: int, rng) -> TransitionBatch:
    return buf.sample(batch_size, rng)


# --------------------------------------------------------------------------
# Policy and environment

@dataclass(frozen=True)
class EpsilonSchedule:
    start: float = 1.0
    decay: float = 0.995
    floor: float = 0.01

    def value(self, k: int) -> float:
        """Exploration rate after ``k`` decays."""
        return max(self.start * self.decay**k, self.floor)


class ClassificationEnv:
    """Walks one seeded permutation of the examples per episode."""

    def __init__(self, states, labels, reward_matrix: RewardMatrix | None = None, seed=0):
        self.states = np.asarray(states, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        if self.states.ndim != 2 or self.states.shape[0] == 0:
            raise InvalidParamError("environment needs at least one example")
        if self.labels.shape != (self.states.shape[0],):
            raise InvalidParamError("one label per state required")
        self.reward_matrix = reward_matrix or RewardMatrix.default()
        self._rng = np.random.default_rng(seed)
        self._order = None
        self.cursor = 0
        self.done = True

    def __len__(self):
        return self.states.shape[0]

    def reset(self) -> np.ndarray:
        self._order = self._rng.permutation(len(self))
        self.cursor = 0
        self.done = False
        return self.states[self._order[0]]

    @property
    def current_label(self) -> int:
        return int(self.labels[self._order[self.cursor]])

    def step(self, action: int):
        """Answer the current example; returns ``(reward, next_state, done)``.

        ``next_state`` is ``None`` once the pass is complete.
        """
        if self.done:
            raise StepAfterDoneError("episode finished; call reset() first")
        if not 0 <= action < N_CLASSES:
            raise InvalidParamError(f"invalid action {action}")
        reward = self.reward_matrix.lookup(self.current_label, action)
        self.cursor += 1
        if self.cursor == len(self):
            self.done = True
            return reward, None, True
        return reward, self.states[self._order[self.cursor]], False


def env_reset(env: ClassificationEnv) -> np.ndarray:
    return env.reset()


def env_step(env: ClassificationEnv, action: int):
    return env.step(action)


def select_action(net: Mlp, state, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy choice. Always consumes exactly one uniform draw first."""
    if not 0.0 <= epsilon <= 1.0:
        raise InvalidParamError("epsilon must lie in [0, 1]")
    if rng.random() < epsilon:
        return int(rng.integers(net.num_actions))
    return int(np.argmax(forward(net, state)))


def play_episode(env: ClassificationEnv, policy) -> tuple[float, np.ndarray, np.ndarray]:
    """Run one full pass with ``policy(state) -> action`` and no learning.

    Returns the episode reward plus the true labels and chosen actions.
    """
    state = env.reset()
    rewards, actuals, actions = [], [], []
    done = False
    while not done:
        actuals.append(env.current_label)
        action = int(policy(state))
        reward, state, done = env.step(action)
        rewards.append(reward)
        actions.append(action)
    return math.fsum(rewards), np.array(actuals), np.array(actions)


def q_target(reward: float, next_q, gamma: float) -> float:
    if next_q is None:
        return float(reward)
    return float(reward + gamma * np.max(next_q))


# --------------------------------------------------------------------------
# DQN training

@dataclass(frozen=True)
class EpisodeRecord:
    episode: int  # 1-based
    cumulative_reward: float
    epsilon: float


@dataclass(eq=False)
class DQNResult:
    net: Mlp
    reward_log: list[EpisodeRecord]
    total_reward: float  # correctly rounded sum of every step reward in logged episodes
    timesteps: int
    episode_actions: list = field(default_factory=list)  # (actuals, actions) per logged episode


def _run_dqn(
    X, y, hp: HyperParams, matrix: RewardMatrix, seed,
    *, max_episodes=None, max_steps=None,
    buffer_capacity=DEFAULT_BUFFER_CAPACITY, target_sync_interval=None,
    record_actions=False,
) -> DQNResult:
    X = check_features(X)
    y = check_labels(y, X.shape[0])
    init_seed, env_seed, policy_seed, sample_seed = np.random.SeedSequence(seed).spawn(4)
    net = init_mlp(X.shape[1], N_CLASSES, seed=init_seed)
    adam = AdamState.for_net(net, hp.beta1, hp.beta2, hp.adam_eps)
    target_net = net if not target_sync_interval else net.copy()
    env = ClassificationEnv(X, y, matrix, seed=env_seed)
    buf = ReplayBuffer(buffer_capacity)
    policy_rng = np.random.default_rng(policy_seed)
    sample_rng = np.random.default_rng(sample_seed)
    schedule = EpsilonSchedule(hp.epsilon_start, hp.epsilon_decay, hp.epsilon_min)

    log, episode_actions = [], []
    logged_rewards = []
    steps = 0
    updates = 0
    completed = 0
    step_rewards = []
    actuals, actions = [], []
    if max_episodes == 0 or max_steps == 0:
        return DQNResult(net, log, 0.0, steps)

    state = env.reset()
    epsilon = schedule.value(0)
    while True:
        actual = env.current_label
        action = select_action(net, state, epsilon, policy_rng)
        reward, next_state, done = env.step(action)
        buf.push(Transition(state, action, reward, next_state, done))
        steps += 1
        step_rewards.append(reward)
        if record_actions:
            actuals.append(actual)
            actions.append(action)

        if len(buf) >= hp.batch_size:
            batch = buf.sample(hp.batch_size, sample_rng)
            next_q = forward(target_net, batch.next_states).max(axis=1)
            targets = batch.rewards + hp.gamma * np.where(batch.dones, 0.0, next_q)
            _, grads = loss_and_gradients(
                net, batch.states, lambda q: squared_q_head(q, batch.actions, targets)
            )
            adam_update_(net, grads, adam, hp.learning_rate)
            updates += 1
            if not target_sync_interval:
                target_net = net
            elif updates % target_sync_interval == 0:
                target_net = net.copy()

        if done:
            completed += 1
            # fsum keeps e.g. ten rewards of -1.2 at exactly -12.0
            log.append(EpisodeRecord(completed, math.fsum(step_rewards), epsilon))
            logged_rewards.extend(step_rewards)
            if record_actions:
                episode_actions.append((np.array(actuals), np.array(actions)))
            step_rewards = []
            actuals, actions = [], []
            epsilon = schedule.value(completed)
            if max_episodes is not None and completed >= max_episodes:
                break
            state = env.reset()
        else:
            state = next_state
        if max_steps is not None and steps >= max_steps:
            break
    return DQNResult(net, log, math.fsum(logged_rewards), steps, episode_actions)


def dqn_train_epoch(X, y, hp: HyperParams = HyperParams(), matrix: RewardMatrix | None = None, seed=0, **kwargs) -> DQNResult:
    """Epoch regime: ``hp.epochs`` full passes, epsilon decays once per pass."""
    return _run_dqn(X, y, hp, matrix or RewardMatrix.default(), seed, max_episodes=hp.epochs, **kwargs)


def dqn_train_timestep(
    X, y, hp: HyperParams = HyperParams(), matrix: RewardMatrix | None = None,
    total_timesteps: int = DEFAULT_TIMESTEPS, seed=0, **kwargs,
) -> DQNResult:
    """Timestep regime: stop after ``total_timesteps`` environment steps.

    The environment auto-resets between passes. A trailing partial episode
    is not logged.
    """
    if total_timesteps < 1:
        raise InvalidParamError("total_timesteps must be >= 1")
    return _run_dqn(X, y, hp, matrix or RewardMatrix.default(), seed, max_steps=total_timesteps, **kwargs)


class DQNClassifier(ClassifierMixin, BaseEstimator):
    """Deep Q-network classifier; ``predict`` is the greedy action.

    Parameters
    ----------
    regime : {"epoch", "timestep"}
        Outer loop counted in passes over the data or in environment steps.
    reward_matrix : RewardMatrix, "default", "table6", or None
        ``None`` and ``"default"`` give +1 on the diagonal and -1 elsewhere.
    target_sync_interval : int or None
        Copy the online network into a frozen target network every this
        many gradient steps. ``None`` bootstraps from the online network.
    """

    def __init__(
        self,
        regime="epoch",
        reward_matrix=None,
        epochs=50,
        total_timesteps=DEFAULT_TIMESTEPS,
        batch_size=64,
        learning_rate=0.001,
        gamma=0.99,
        epsilon_start=1.0,
        epsilon_decay=0.995,
        epsilon_min=0.01,
        buffer_capacity=DEFAULT_BUFFER_CAPACITY,
        target_sync_interval=None,
        random_state=0,
    ):
        self.regime = regime
        self.reward_matrix = reward_matrix
        self.epochs = epochs
        self.total_timesteps = total_timesteps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.gamma = gamma
        self.epsilon_start = epsilon_start
        self.epsilon_decay = epsilon_decay
        self.epsilon_min = epsilon_min
        self.buffer_capacity = buffer_capacity
        self.target_sync_interval = target_sync_interval
        self.random_state = random_state

    def _hyperparams(self) -> HyperParams:
        return HyperParams(
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            gamma=self.gamma,
            epsilon_start=self.epsilon_start,
            epsilon_decay=self.epsilon_decay,
            epsilon_min=self.epsilon_min,
            epochs=self.epochs,
        )

    def fit(self, X, y):
        matrix = resolve_reward_matrix(self.reward_matrix)
        kwargs = dict(
            buffer_capacity=self.buffer_capacity,
            target_sync_interval=self.target_sync_interval,
        )
        if self.regime == "epoch":
            result = dqn_train_epoch(X, y, self._hyperparams(), matrix, self.random_state, **kwargs)
        elif self.regime == "timestep":
            result = dqn_train_timestep(
                X, y, self._hyperparams(), matrix, self.total_timesteps, self.random_state, **kwargs
            )
        else:
            raise InvalidParamError(f"regime must be 'epoch' or 'timestep', got {self.regime!r}")
        self.net_ = result.net
        self.reward_log_ = result.reward_log
        self.total_reward_ = result.total_reward
        self.classes_ = np.arange(N_CLASSES)
        self.n_features_in_ = self.net_.num_features
        return self

    def decision_function(self, X):
        """Q-values, one column per class."""
        check_fitted_net(self)
        return forward(self.net_, check_features(X, self.n_features_in_))

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)


def resolve_reward_matrix(spec) -> RewardMatrix:
    if spec is None or spec == "default":
        return RewardMatrix.default()
    if isinstance(spec, RewardMatrix):
        return spec
    if spec == "table6":
        return RewardMatrix.table6()
    if isinstance(spec, (str, Path)):
        return RewardMatrix.from_csv(spec)
    return RewardMatrix(spec)
