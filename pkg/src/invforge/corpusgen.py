"""Deterministic MiniLang pseudo-projects with test suites and ground-truth invariant labels.

Templates (each instance is one method, guard pairs are two):

* ``guard_pair``: a method that checks its object parameter against null before use
  (its tests sometimes pass null) next to one that dereferences it directly (never null).
  Both carry the identical candidate ``p != null``; only the body tells them apart.
* ``abs`` / ``clamp``: numeric functions with known result bounds.
* ``counter``: increments a nested counter field.
* ``store``: packs object parameters into a record and returns it. Whether a parameter
  may be null is a per-project naming convention, so every label of the method depends
  on project-specific identifiers.

Sparsity traps make a numeric method's tests under-sample its input domain, so
cross-validation marks a too-strong bound valid while the ground truth says invalid.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .invariants import CONSTANT_POOL

TEMPLATES = ("guard_pair", "abs", "clamp", "counter", "store")
CLAMP_LIMITS = (15, 63, 255, 1023)
_RESERVED = {
    "fn", "if", "else", "while", "return", "null", "new", "record", "len", "array", "push", "rand",
    "orig", "elem", "forall", "exists", "same", "contains", "test", "this",
}
_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"
_SPARSE_RE = re.compile(r"^sparse\(\s*([0-9.]+)\s*\)$")


@dataclass
class GenConfig:
    n_projects: int = 4
    methods_per_project: int = 20
    weights: dict[str, float] = field(default_factory=lambda: {t: 1.0 for t in TEMPLATES})
    coverage: str = "sparse(0.3)"
    tests_per_method: int = 4
    calls_per_test: int = 6
    pool_size: int = 24
    store_nouns: int = 2
    seed: int = 0

    def __post_init__(self):
        unknown = set(self.weights) - set(TEMPLATES)
        if unknown:
            raise ValueError(f"unknown templates: {sorted(unknown)}")
        if any(w < 0 for w in self.weights.values()) or sum(self.weights.values()) <= 0:
            raise ValueError("template weights must be nonnegative with a positive sum")
        self.trap_rate  # validates coverage
        if self.n_projects < 1 or self.methods_per_project < 1:
            raise ValueError("need at least one project and one method")
        if self.tests_per_method < 1 or self.calls_per_test < 1:
            raise ValueError("tests_per_method and calls_per_test must be positive")
        if self.pool_size < 12:
            raise ValueError("pool_size must be at least 12")
        if not 1 <= self.store_nouns <= self.pool_size // 3:
            raise ValueError(f"store_nouns must be between 1 and {self.pool_size // 3}")

    @property
    def trap_rate(self) -> float:
        if self.coverage == "full":
            return 0.0
        m = _SPARSE_RE.match(self.coverage)
        if not m or not 0 <= float(m.group(1)) <= 1:
            raise ValueError(f"coverage must be 'full' or 'sparse(p)' with p in [0, 1], not {self.coverage!r}")
        return float(m.group(1))

    @classmethod
    def from_json(cls, obj: dict) -> "GenConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(obj) - known
        if extra:
            raise ValueError(f"unknown generator settings: {sorted(extra)}")
        return cls(**obj)

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Truth:
    method: str
    point: str
    invariant: str
    label: str
    rule: str
    pair: str = ""

    def to_json(self, project: str) -> dict:
        out = {"project": project, "method": self.method, "point": self.point, "invariant": self.invariant, "label": self.label, "rule": self.rule}
        if self.pair:
            out["pair"] = self.pair
        return out


@dataclass
class Project:
    name: str
    style: str
    sources: dict[str, str] = field(default_factory=dict)
    tests: dict[str, str] = field(default_factory=dict)
    truth: list[Truth] = field(default_factory=list)
    core: list[str] = field(default_factory=list)


# -- identifiers ---------------------------------------------------------------------


def _pseudo_word(rng: random.Random) -> str:
    n = rng.choice((2, 2, 3))
    word = "".join(rng.choice(_CONSONANTS) + rng.choice(_VOWELS) for _ in range(n))
    if rng.random() < 0.5:
        word += rng.choice(_CONSONANTS)
    return word


def vernacular_pools(n_projects: int, size: int, rng: random.Random) -> list[list[str]]:
    """Disjoint per-project word pools."""
    used: set[str] = set()
    pools = []
    for _ in range(n_projects):
        pool = []
        while len(pool) < size:
            w = _pseudo_word(rng)
            if w in used or w in _RESERVED or w.startswith("test"):
                continue
            used.add(w)
            pool.append(w)
        pools.append(pool)
    return pools


class Namer:
    def __init__(self, rng: random.Random, pool: list[str], style: str):
        self.rng = rng
        self.pool = pool
        self.style = style
        self.used: set[str] = set()
        # the first words are the project's nouns for object parameters
        self.nouns = pool[: len(pool) // 3]
        self.words = pool[len(pool) // 3 :]

    def _join(self, parts: list[str]) -> str:
        if self.style == "snake":
            return "_".join(parts)
        return parts[0] + "".join(p[:1].upper() + p[1:] for p in parts[1:])

    def fresh(self, n_parts: int = 2) -> str:
        for _ in range(10_000):
            name = self._join([self.rng.choice(self.pool) for _ in range(n_parts)])
            if name not in self.used:
                self.used.add(name)
                return name
        raise RuntimeError("identifier space exhausted")

    def type_name(self) -> str:
        name = self.fresh(2)
        return name[:1].upper() + name[1:]

    def word(self, exclude=()) -> str:
        return self.rng.choice([w for w in self.words if w not in exclude])

    def words_(self, k: int, exclude=()) -> list[str]:
        return self.rng.sample([w for w in self.words if w not in exclude], k)


# -- ground-truth helpers ---------------------------------------------------------------


def _bound_truths(method: str, point: str, term: str, lo: int, hi: int, rule: str) -> list[Truth]:
    """Labels for ``term >= c``, ``term <= c`` and ``term == c`` given a true range [lo, hi]."""
    out = []
    for c in CONSTANT_POOL:
        if c <= hi:
            out.append(Truth(method, point, f"{term} >= {c}", "valid" if c <= lo else "invalid", rule))
        if c >= lo:
            out.append(Truth(method, point, f"{term} <= {c}", "valid" if c >= hi else "invalid", rule))
        if lo <= c <= hi:
            out.append(Truth(method, point, f"{term} == {c}", "valid" if lo == hi == c else "invalid", rule))
    return out


def _loop_test(name: str, calls: int, body: list[str], setup: list[str] = ()) -> str:
    lines = [f"fn {name}() {{"]
    lines += [f"    {s}" for s in setup]
    lines += ["    n = 0;", f"    while (n < {calls}) {{"]
    lines += [f"        {s}" for s in body]
    lines += ["        n = n + 1;", "    }", "}"]
    return "\n".join(lines) + "\n"


# -- templates -----------------------------------------------------------------------------


class _Builder:
    def __init__(self, project: Project, namer: Namer, cfg: GenConfig, rng: random.Random, traits: dict[str, bool], noun_types: dict[str, tuple[str, str]]):
        self.p = project
        self.n = namer
        self.cfg = cfg
        self.rng = rng
        self.traits = traits
        self.noun_types = noun_types

    def add_source(self, key: str, text: str, methods: list[str]) -> None:
        self.p.sources[key] = text
        self.p.core.extend(methods)

    def add_tests(self, method: str, tests: list[str]) -> None:
        self.p.tests[method] = "\n".join(tests)

    def trapped(self) -> bool:
        return self.rng.random() < self.cfg.trap_rate

    # guard pattern: identical candidate text, label decided by the body
    def guard_pair(self) -> int:
        rec = self.n.type_name()
        fld = self.n.word()
        p = self.n.word(exclude=(fld,))
        k = self.n.word(exclude=(fld, p))
        guarded, plain = self.n.fresh(), self.n.fresh()
        default = self.rng.choice((0, 1, -1))
        style = self.rng.randrange(3)
        if style == 0:
            gbody = [f"    if ({p} == null) {{", f"        return {default};", "    }", f"    return {p}.{fld} + {k};"]
        elif style == 1:
            gbody = ["    acc = " + str(default) + ";", f"    if ({p} != null) {{", f"        acc = {p}.{fld} * {k};", "    }", "    return acc;"]
        else:
            gbody = [f"    if ({p} == null) {{", f"        {p} = new {rec} {{ {fld}: 0 }};", "    }", f"    return {p}.{fld} - {k};"]
        pstyle = self.rng.randrange(3)
        if pstyle == 0:
            pbody = [f"    return {p}.{fld} + {k};"]
        elif pstyle == 1:
            pbody = [f"    acc = {p}.{fld} * {k};", f"    if ({k} > {self.rng.randint(2, 9)}) {{", f"        acc = acc + 1;", "    }", "    return acc;"]
        else:
            pbody = [f"    {p}.{fld} = {p}.{fld} + {k};", f"    return {p}.{fld};"]
        src = f"record {rec} {{ {fld} }}\n\n"
        src += f"fn {guarded}({p}, {k}) {{\n" + "\n".join(gbody) + "\n}\n\n"
        src += f"fn {plain}({p}, {k}) {{\n" + "\n".join(pbody) + "\n}\n"
        self.add_source(guarded, src, [guarded, plain])
        calls = self.cfg.calls_per_test
        n_tests = self.cfg.tests_per_method
        # at least one but not every guarded test passes null
        null_tests = set(self.rng.sample(range(n_tests), max(1, n_tests // 3))) if n_tests > 1 else {0}
        tests = []
        for i in range(n_tests):
            body = [f"x = new {rec} {{ {fld}: rand(0, 99) }};"]
            if i in null_tests:
                body.append(f"if (n == {self.rng.randrange(calls)}) {{ x = null; }}")
            body.append(f"{guarded}(x, rand(1, 50));")
            tests.append(_loop_test(f"test_{guarded}_{i}", calls, body))
        self.add_tests(guarded, tests)
        tests = []
        for i in range(n_tests):
            body = [f"x = new {rec} {{ {fld}: rand(0, 99) }};", f"{plain}(x, rand(1, 50));"]
            tests.append(_loop_test(f"test_{plain}_{i}", calls, body))
        self.add_tests(plain, tests)
        pair = f"{guarded}|{plain}"
        t = self.p.truth
        t.append(Truth(guarded, "pre", f"{p} != null", "invalid", "guard-pair:guarded", pair))
        t.append(Truth(plain, "pre", f"{p} != null", "valid", "guard-pair:plain", pair))
        t.append(Truth(guarded, "pre", f"{p} == null", "invalid", "guard-pair:guarded", pair))
        t.append(Truth(plain, "pre", f"{p} == null", "invalid", "guard-pair:plain", pair))
        for m in (guarded, plain):
            t.extend(_bound_truths(m, "pre", k, 1, 50, "domain"))
        return 2

    def abs_(self) -> int:
        m, v = self.n.fresh(), self.n.word()
        src = f"fn {m}({v}) {{\n    if ({v} < 0) {{\n        return 0 - {v};\n    }}\n    return {v};\n}}\n"
        self.add_source(m, src, [m])
        trap = self.trapped()
        lo, hi = (1, 1000) if trap else (-1000, 1000)
        tests = [_loop_test(f"test_{m}_{i}", self.cfg.calls_per_test, [f"{m}(rand({lo}, {hi}));"]) for i in range(self.cfg.tests_per_method)]
        self.add_tests(m, tests)
        rule = "abs"
        t = self.p.truth
        t.extend(_bound_truths(m, "pre", v, -1000, 1000, "domain"))
        t.extend(_bound_truths(m, "post", "return", 0, 1000, rule))
        t.extend(_bound_truths(m, "post", f"orig({v})", -1000, 1000, "domain"))
        t.append(Truth(m, "post", f"return >= orig({v})", "valid", rule))
        t.append(Truth(m, "post", f"return == orig({v})", "invalid", rule))
        t.append(Truth(m, "post", f"return > orig({v})", "invalid", rule))
        return 1

    def clamp(self) -> int:
        m, v = self.n.fresh(), self.n.word()
        top = self.rng.choice(CLAMP_LIMITS)
        src = (
            f"fn {m}({v}) {{\n    if ({v} > {top}) {{\n        return {top};\n    }}\n"
            f"    if ({v} < 0) {{\n        return 0;\n    }}\n    return {v};\n}}\n"
        )
        self.add_source(m, src, [m])
        trap = self.trapped()
        lo, hi = (0, top // 2) if trap else (-2000, 2000)
        tests = [_loop_test(f"test_{m}_{i}", self.cfg.calls_per_test, [f"{m}(rand({lo}, {hi}));"]) for i in range(self.cfg.tests_per_method)]
        self.add_tests(m, tests)
        t = self.p.truth
        t.extend(_bound_truths(m, "pre", v, -2000, 2000, "domain"))
        t.extend(_bound_truths(m, "post", "return", 0, top, "clamp"))
        t.extend(_bound_truths(m, "post", f"orig({v})", -2000, 2000, "domain"))
        for op in ("==", "<=", ">=", "<", ">"):
            t.append(Truth(m, "post", f"return {op} orig({v})", "invalid", "clamp"))
        return 1

    def counter(self) -> int:
        holder, counter = self.n.type_name(), self.n.type_name()
        c, v = self.n.words_(2)
        this = "this"
        amount = self.n.word(exclude=(c, v))
        m = self.n.fresh()
        src = (
            f"record {holder} {{ {c} }}\nrecord {counter} {{ {v} }}\n\n"
            f"fn {m}({this}, {amount}) {{\n    {this}.{c}.{v} = {this}.{c}.{v} + {amount};\n    return {this}.{c}.{v};\n}}\n"
        )
        self.add_source(m, src, [m])
        fresh = f"h = new {holder} {{ {c}: new {counter} {{ {v}: 0 }} }};"
        trap = self.trapped()
        tests = []
        for i in range(self.cfg.tests_per_method):
            call = f"{m}(h, rand(1, 50));"
            if trap:
                tests.append(_loop_test(f"test_{m}_{i}", self.cfg.calls_per_test, [fresh, call]))
            else:
                setup = [f"h = new {holder} {{ {c}: new {counter} {{ {v}: rand(0, 20) }} }};"]
                tests.append(_loop_test(f"test_{m}_{i}", self.cfg.calls_per_test, [call], setup))
        self.add_tests(m, tests)
        t = self.p.truth
        cv = f"{this}.{c}.{v}"
        t.append(Truth(m, "pre", f"{this} != null", "valid", "counter"))
        t.append(Truth(m, "pre", f"{this}.{c} != null", "valid", "counter"))
        t.append(Truth(m, "pre", f"{cv} >= 0", "valid", "counter"))
        for c_ in CONSTANT_POOL:
            if 0 <= c_ <= 1000:
                t.append(Truth(m, "pre", f"{cv} == {c_}", "invalid", "counter:fresh-object-trap"))
            if 1 <= c_ <= 1000:
                t.append(Truth(m, "pre", f"{cv} >= {c_}", "invalid", "counter"))
        t.extend(_bound_truths(m, "pre", amount, 1, 50, "domain"))
        t.append(Truth(m, "post", f"{cv} > orig({cv})", "valid", "counter"))
        t.append(Truth(m, "post", f"return == {cv}", "valid", "counter"))
        t.append(Truth(m, "post", f"return > orig({cv})", "valid", "counter"))
        t.append(Truth(m, "post", f"return == orig({amount})", "invalid", "counter:fresh-object-trap"))
        t.append(Truth(m, "post", f"{cv} == orig({amount})", "invalid", "counter:fresh-object-trap"))
        return 1

    def store(self) -> int:
        # only noun parameters, so every candidate's label follows the project convention
        nouns = self.rng.sample(self.n.nouns, self.cfg.store_nouns)
        box = self.n.type_name()
        m = self.n.fresh()
        held = self.n.word(exclude=nouns)
        fields = ", ".join(f"{noun}: {noun}" for noun in nouns)
        src = (
            f"record {box} {{ {', '.join(nouns)} }}\n\n"
            f"fn {m}({', '.join(nouns)}) {{\n"
            f"    {held} = new {box} {{ {fields} }};\n"
            f"    return {held};\n}}\n"
        )
        self.add_source(m, src, [m])
        tests = []
        for i in range(self.cfg.tests_per_method):
            body = []
            for j, noun in enumerate(nouns):
                typ, fld = self.noun_types[noun]
                body.append(f"a{j} = new {typ} {{ {fld}: rand(0, 9) }};")
                if self.traits[noun] and self.rng.random() < 0.5:
                    body.append(f"if (n == {self.rng.randrange(self.cfg.calls_per_test)}) {{ a{j} = null; }}")
            body.append(f"{m}({', '.join(f'a{j}' for j in range(len(nouns)))});")
            tests.append(_loop_test(f"test_{m}_{i}", self.cfg.calls_per_test, body))
        self.add_tests(m, tests)
        t = self.p.truth
        for noun in nouns:
            nullable = self.traits[noun]
            rule = "store:nullable-name" if nullable else "store:required-name"
            label = "invalid" if nullable else "valid"
            t.append(Truth(m, "pre", f"{noun} != null", label, rule))
            t.append(Truth(m, "pre", f"{noun} == null", "invalid", "store"))
            t.append(Truth(m, "post", f"return.{noun} != null", label, rule))
        t.append(Truth(m, "post", "return != null", "valid", "store"))
        return 1


def generate(cfg: GenConfig) -> list[Project]:
    """Build every project in memory; fully determined by ``cfg`` (including its seed)."""
    master = random.Random(f"pools:{cfg.seed}")
    pools = vernacular_pools(cfg.n_projects, cfg.pool_size, master)
    names = [w for w in TEMPLATES if cfg.weights.get(w, 0) > 0]
    weights = [cfg.weights[w] for w in names]
    projects = []
    for i, pool in enumerate(pools):
        rng = random.Random(f"project:{cfg.seed}:{i}")
        style = "camel" if rng.random() < 0.5 else "snake"
        project = Project(f"project{i}", style)
        namer = Namer(rng, pool, style)
        traits = {noun: rng.random() < 0.5 for noun in namer.nouns}
        noun_types = {}
        type_src = []
        for noun in namer.nouns:
            typ = noun[:1].upper() + noun[1:] + "Rec"
            fld = namer.word()
            noun_types[noun] = (typ, fld)
            type_src.append(f"record {typ} {{ {fld} }}")
        if "store" in names:
            project.sources["types"] = "\n".join(type_src) + "\n"
        b = _Builder(project, namer, cfg, rng, traits, noun_types)
        made = 0
        while made < cfg.methods_per_project:
            template = rng.choices(names, weights)[0]
            made += {"guard_pair": b.guard_pair, "abs": b.abs_, "clamp": b.clamp, "counter": b.counter, "store": b.store}[template]()
        projects.append(project)
    return projects


def write_corpus(out, cfg: GenConfig, projects: list[Project] | None = None) -> list[str]:
    """Write ``<project>/src/*.mini``, ``<project>/tests/*.mini`` and ``<project>/ground_truth.jsonl``."""
    projects = projects if projects is not None else generate(cfg)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for p in projects:
        root = out / p.name
        for sub in ("src", "tests"):
            (root / sub).mkdir(parents=True, exist_ok=True)
            # sources left by an earlier generation would merge into this one
            for stale in (root / sub).glob("*.mini"):
                stale.unlink()
        for key, text in sorted(p.sources.items()):
            (root / "src" / f"{key}.mini").write_text(text, encoding="utf-8")
        for key, text in sorted(p.tests.items()):
            (root / "tests" / f"test_{key}.mini").write_text(text, encoding="utf-8")
        truths = sorted(set(p.truth), key=lambda t: (t.method, t.point, t.invariant))
        lines = [json.dumps(t.to_json(p.name), ensure_ascii=False, separators=(",", ":")) for t in truths]
        (root / "ground_truth.jsonl").write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        (root / "core.txt").write_text("".join(f"{m}\n" for m in sorted(p.core)), encoding="utf-8")
    manifest = {"projects": [p.name for p in projects], "config": cfg.to_json()}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return [p.name for p in projects]


def read_core(project_dir) -> list[str]:
    path = Path(project_dir) / "core.txt"
    return [line.strip() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
