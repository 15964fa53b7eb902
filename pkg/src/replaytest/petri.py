"""Coloured, timed Petri net engine with game bindings.

Nets are loaded as *templates* whose places and transitions refer to formal
entity parameters (``$button``, ``$door``); instantiating a template against
concrete entity names yields namespaced ids like ``T1@Door1`` plus concrete
message patterns and state-predicate bindings.

Markings are plain mappings from place id to a sorted tuple of token colours
(a multiset). ``is_enabled``/``fire`` are pure: they never mutate their
inputs, so instances can be shared freely. Colour guards are honoured on
place-to-transition arcs; a transition consumes the lexicographically
smallest passing colour from each input place and propagates the smallest
consumed colour to its outputs (or ``neutral`` when it has no inputs).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .entities import UnknownEntity

NEUTRAL_COLOUR = "neutral"

Marking = Mapping[str, tuple[str, ...]]


class NetParseError(ValueError):
    pass


class ArcKindViolation(NetParseError):
    pass


class UnboundParameterReference(NetParseError):
    def __init__(self, param: str, where: str):
        super().__init__(f"{where} references undeclared parameter {param!r}")
        self.param = param


class MissingBinding(ValueError):
    def __init__(self, param: str):
        super().__init__(f"no binding for parameter {param!r}")
        self.param = param


class UnknownTransition(KeyError):
    pass


class NotEnabled(ValueError):
    pass


class AmbiguousBinding(ValueError):
    pass


class PredicateBindingMissing(ValueError):
    pass


@dataclass(frozen=True)
class Place:
    id: str
    label: str = ""
    predicate: tuple[str, str] | None = None      # (entity or $param, key)
    achiever: dict | None = None


@dataclass(frozen=True)
class Transition:
    id: str
    label: str = ""
    duration: int | None = None                   # wait budget, ticks
    message: tuple[str, str, str | None] | None = None  # (type, source, target)


@dataclass(frozen=True)
class Arc:
    src: str
    dst: str
    guard: frozenset[str] | None = None


@dataclass
class NetTemplate:
    name: str
    params: list[str]
    places: list[Place]
    transitions: list[Transition]
    arcs: list[Arc]
    name_by: str | None = None    # parameter whose binding namespaces ids

    def place_ids(self) -> list[str]:
        return [p.id for p in self.places]

    def transition_ids(self) -> list[str]:
        return [t.id for t in self.transitions]

    def validate(self) -> None:
        pids = set(self.place_ids())
        tids = set(self.transition_ids())
        if pids & tids or len(pids) != len(self.places) or \
                len(tids) != len(self.transitions):
            raise NetParseError("place/transition ids must be unique")
        for arc in self.arcs:
            src_is_place = arc.src in pids
            dst_is_place = arc.dst in pids
            if arc.src not in pids | tids or arc.dst not in pids | tids:
                raise NetParseError(f"arc references unknown id "
                                    f"{arc.src!r} -> {arc.dst!r}")
            if src_is_place == dst_is_place:
                raise ArcKindViolation(
                    f"arc {arc.src} -> {arc.dst} must connect a place and "
                    "a transition")
        declared = set(self.params)

        def check_param(value: str | None, where: str) -> None:
            if value and value.startswith("$") and value not in declared:
                raise UnboundParameterReference(value, where)

        for p in self.places:
            if p.predicate:
                check_param(p.predicate[0], f"place {p.id} predicate")
            if p.achiever:
                if not p.predicate:
                    raise NetParseError(
                        f"place {p.id} has an achiever but no predicate")
                check_param(p.achiever.get("target"), f"place {p.id} achiever")
        for t in self.transitions:
            if t.duration is not None and t.duration < 0:
                raise NetParseError(f"transition {t.id} duration < 0")
            if t.message:
                check_param(t.message[1], f"transition {t.id} message source")
                check_param(t.message[2], f"transition {t.id} message target")
        check_param(self.name_by, "name_by")


def parse_net(doc: dict[str, Any], name: str = "net") -> NetTemplate:
    try:
        places = [Place(p["id"], p.get("label", ""),
                        (p["predicate"]["entity"], p["predicate"]["key"])
                        if p.get("predicate") else None,
                        p.get("achiever"))
                  for p in doc.get("places", [])]
        transitions = [Transition(t["id"], t.get("label", ""),
                                  t.get("duration"),
                                  (t["message"]["type"],
                                   t["message"]["source"],
                                   t["message"].get("target"))
                                  if t.get("message") else None)
                       for t in doc.get("transitions", [])]
        arcs = [Arc(a["from"], a["to"],
                    frozenset(a["guard"]) if a.get("guard") else None)
                for a in doc.get("arcs", [])]
    except (KeyError, TypeError) as exc:
        raise NetParseError(f"malformed net file: {exc}") from None
    tpl = NetTemplate(doc.get("name", name), list(doc.get("params", [])),
                      places, transitions, arcs, doc.get("name_by"))
    tpl.validate()
    return tpl


def load_net(path: str) -> NetTemplate:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise NetParseError(f"{path}: {exc.msg} (line {exc.lineno})") \
                from None
    return parse_net(doc, name=path)


@dataclass
class NetInstance:
    """A template bound to concrete entities; ids namespaced ``T1@Door1``."""

    template: NetTemplate
    bindings: dict[str, str]
    suffix: str

    places: list[Place] = field(default_factory=list)
    transitions: list[Transition] = field(default_factory=list)
    _inputs: dict[str, list[tuple[str, frozenset[str] | None]]] = \
        field(default_factory=dict)
    _outputs: dict[str, list[str]] = field(default_factory=dict)

    def qualify(self, bare_id: str) -> str:
        return f"{bare_id}@{self.suffix}"

    def place(self, pid: str) -> Place:
        for p in self.places:
            if p.id == pid or self.qualify(p.id) == pid:
                return p
        raise KeyError(pid)

    def transition(self, tid: str) -> Transition:
        for t in self.transitions:
            if t.id == tid or self.qualify(t.id) == tid:
                return t
        raise UnknownTransition(tid)

    def input_places(self, tid: str) -> list[tuple[str, frozenset[str] | None]]:
        """(place id, arc guard) pairs feeding a transition, document order."""
        return self._inputs[self.transition(tid).id]

    def output_places(self, tid: str) -> list[str]:
        return self._outputs[self.transition(tid).id]


def _resolve(value: str | None, bindings: dict[str, str]) -> str | None:
    if value is None:
        return None
    if value.startswith("$"):
        return bindings[value]
    return value


def instantiate(template: NetTemplate, bindings: dict[str, str],
                world: Any = None) -> NetInstance:
    """Bind a template's parameters to concrete entity names.

    With a world supplied, bound names must exist in it. Message-binding
    patterns must be unique within the instance.
    """
    for param in template.params:
        if param not in bindings:
            raise MissingBinding(param)
    if world is not None:
        for name in bindings.values():
            if not world.entities.has_entity(name):
                raise UnknownEntity(name)
    name_by = template.name_by or (template.params[0] if template.params
                                   else None)
    suffix = bindings.get(name_by, template.name) if name_by else template.name

    places = [Place(p.id, p.label,
                    (_resolve(p.predicate[0], bindings), p.predicate[1])
                    if p.predicate else None,
                    {**p.achiever,
                     "target": _resolve(p.achiever.get("target"), bindings)}
                    if p.achiever else None)
              for p in template.places]
    transitions = [Transition(t.id, t.label, t.duration,
                              (t.message[0],
                               _resolve(t.message[1], bindings),
                               _resolve(t.message[2], bindings))
                              if t.message else None)
                   for t in template.transitions]
    patterns = [t.message for t in transitions if t.message]
    if len(patterns) != len(set(patterns)):
        raise AmbiguousBinding("duplicate message patterns within an instance")

    inst = NetInstance(template, dict(bindings), suffix, places, transitions)
    pids = set(template.place_ids())
    for t in transitions:
        inst._inputs[t.id] = [(a.src, a.guard) for a in template.arcs
                              if a.dst == t.id and a.src in pids]
        inst._outputs[t.id] = [a.dst for a in template.arcs
                               if a.src == t.id and a.dst in pids]
    return inst


# ---------------------------------------------------------------------------
# Marking semantics


def _tokens(marking: Marking, pid: str) -> tuple[str, ...]:
    return marking.get(pid, ())


def _passes(colour: str, guard: frozenset[str] | None) -> bool:
    return guard is None or colour in guard


def is_enabled(instance: NetInstance, marking: Marking, tid: str) -> bool:
    """True iff every input place holds at least one token whose colour
    passes that arc's guard. Pure."""
    for pid, guard in instance.input_places(tid):
        if not any(_passes(c, guard) for c in _tokens(marking, pid)):
            return False
    return True


def enabled_transitions(instance: NetInstance, marking: Marking) -> list[str]:
    return [t.id for t in instance.transitions
            if is_enabled(instance, marking, t.id)]


def fire(instance: NetInstance, marking: Marking, tid: str) -> dict[str, tuple[str, ...]]:
    """Consume one guard-passing token per input place (smallest colour) and
    produce one token on each output place. Returns a new marking."""
    if not is_enabled(instance, marking, tid):
        raise NotEnabled(tid)
    new: dict[str, tuple[str, ...]] = {k: v for k, v in marking.items()}
    consumed: list[str] = []
    for pid, guard in instance.input_places(tid):
        tokens = list(_tokens(new, pid))
        colour = min(c for c in tokens if _passes(c, guard))
        tokens.remove(colour)
        consumed.append(colour)
        new[pid] = tuple(sorted(tokens))
    produced = min(consumed) if consumed else NEUTRAL_COLOUR
    for pid in instance.output_places(tid):
        new[pid] = tuple(sorted(_tokens(new, pid) + (produced,)))
    return new


def marking_size(marking: Marking) -> int:
    return sum(len(v) for v in marking.values())


def sync_marking(instance: NetInstance, world: Any) -> dict[str, tuple[str, ...]]:
    """Derive a marking from live game state: one token per place whose
    predicate currently holds, coloured by the entity type that makes it
    true. Every place must carry a predicate binding."""
    marking: dict[str, tuple[str, ...]] = {}
    for p in instance.places:
        if p.predicate is None:
            raise PredicateBindingMissing(
                f"place {p.id} has no predicate binding")
        ok, witness = world.query_state_with_witness(p.predicate)
        marking[p.id] = (witness or NEUTRAL_COLOUR,) if ok else ()
    return marking


def transition_for_message(instances: Iterable[NetInstance],
                           key: tuple[str, str, str | None]
                           ) -> tuple[NetInstance, str] | None:
    """Find the unique instance transition whose message pattern matches a
    (type, source name, target name) triple; None when unbound."""
    matches = []
    for inst in instances:
        for t in inst.transitions:
            if t.message == key:
                matches.append((inst, t.id))
    if not matches:
        return None
    if len(matches) > 1:
        raise AmbiguousBinding(f"{key} matches {len(matches)} transitions")
    return matches[0]


# ---------------------------------------------------------------------------
# Level companion files: templates plus instance bindings


def load_instances(companion_path: str, world: Any = None
                   ) -> list[NetInstance]:
    """Load a level's companion file: ``{"nets": {name: template path},
    "instances": [{"net": name, "bindings": {...}, "achievers": {...}},
    ...]}``. Template paths are relative to the companion file; an instance's
    ``achievers`` map overrides place achievers (e.g. swapping a navigation
    achiever for an inject_raw snippet on one particular door)."""
    import os

    with open(companion_path, encoding="utf-8") as fh:
        doc = json.load(fh)
    base = os.path.dirname(os.path.abspath(companion_path))
    templates = {name: load_net(os.path.join(base, rel))
                 for name, rel in doc.get("nets", {}).items()}
    instances = []
    for entry in doc.get("instances", []):
        tpl = templates[entry["net"]]
        inst = instantiate(tpl, entry["bindings"], world)
        for pid, achiever in entry.get("achievers", {}).items():
            place = inst.place(pid)
            idx = inst.places.index(place)
            resolved = dict(achiever)
            if "target" in resolved:
                resolved["target"] = _resolve(resolved["target"],
                                              inst.bindings)
            if "approach" in resolved:
                resolved["approach"] = _resolve(resolved["approach"],
                                                inst.bindings)
            if "snippet" in resolved and not os.path.isabs(resolved["snippet"]):
                resolved["snippet"] = os.path.join(base, resolved["snippet"])
            inst.places[idx] = Place(place.id, place.label, place.predicate,
                                     resolved)
        instances.append(inst)
    return instances
