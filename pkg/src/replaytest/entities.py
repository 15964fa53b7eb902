"""Component-based entity substrate: blueprints, spawning, message passing.

Entities are bags of components built from data-defined blueprints. All
cross-component and cross-entity effects flow through broadcast or targeted
messages delivered synchronously in a fixed order (entity insertion order,
then blueprint component order), which is what makes whole-session replays
byte-reproducible.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from typing import Any, ClassVar, Iterator


class EntityError(Exception):
    """Base for entity-system errors."""


class UnknownComponentKind(EntityError):
    def __init__(self, kind: str):
        super().__init__(f"unknown component kind: {kind!r}")
        self.kind = kind


class DuplicateBlueprint(EntityError):
    def __init__(self, etype: str):
        super().__init__(f"blueprint already registered: {etype!r}")
        self.etype = etype


class UnknownBlueprint(EntityError):
    def __init__(self, etype: str):
        super().__init__(f"no blueprint named {etype!r}")
        self.etype = etype


class DuplicateName(EntityError):
    def __init__(self, name: str):
        super().__init__(f"entity name already in use: {name!r}")
        self.name = name


class UnknownEntity(EntityError):
    def __init__(self, name: str):
        super().__init__(f"no entity named {name!r}")
        self.name = name


class StaleTick(EntityError):
    def __init__(self, msg_tick: int, world_tick: int):
        super().__init__(f"message tick {msg_tick} != world tick {world_tick}")
        self.msg_tick = msg_tick
        self.world_tick = world_tick


class ComponentAbsent(EntityError):
    def __init__(self, name: str, kind: str):
        super().__init__(f"entity {name!r} has no {kind!r} component")
        self.name = name
        self.kind = kind


@dataclass(frozen=True)
class EntityRef:
    """Lightweight (name, type) handle used inside messages and traces."""

    name: str
    etype: str


def _freeze_payload(payload: dict[str, Any] | tuple | None) -> tuple:
    if not payload:
        return ()
    if isinstance(payload, tuple):
        return payload
    return tuple(sorted(payload.items()))


@dataclass(frozen=True)
class Message:
    """One inter-component/inter-entity event. Value record, serializable.

    ``tick`` is the world tick at emission. ``seq`` is a world-assigned
    emission counter that survives level restarts; it exists so observers
    (e.g. recorders on both the source and the target entity) can de-duplicate
    sightings of the same emission.
    """

    tick: int
    mtype: str
    source: EntityRef
    target: EntityRef | None = None
    payload: tuple = ()
    seq: int = -1

    @staticmethod
    def make(tick: int, mtype: str, source: EntityRef,
             target: EntityRef | None = None,
             payload: dict[str, Any] | None = None) -> "Message":
        return Message(tick, mtype, source, target, _freeze_payload(payload))

    def key(self) -> tuple[str, str, str | None]:
        """Identity triple used by trace diffing and condition matching."""
        return (self.mtype, self.source.name,
                self.target.name if self.target else None)


class Component:
    """Attribute-free behaviour holder. Subclasses set ``kind`` and react to
    messages via ``accept``; per-tick work goes in ``update``.

    ``accept`` returns True only when the message was consumed (acted upon);
    pure observers must return False so delivery counts stay meaningful.
    """

    kind: ClassVar[str] = ""

    def __init__(self) -> None:
        self.entity: "Entity | None" = None
        self.world: "EntityWorld | None" = None

    def accept(self, msg: Message) -> bool:
        return False

    def update(self, tick: int) -> None:
        pass

    def on_owner_sent(self, msg: Message) -> None:
        """Called when the owning entity is the source of an outgoing message."""


_COMPONENT_KINDS: dict[str, type[Component]] = {}


def component_kind(cls: type[Component]) -> type[Component]:
    """Class decorator registering a component kind by its ``kind`` name."""
    if not cls.kind:
        raise ValueError(f"{cls.__name__} must set a non-empty kind")
    _COMPONENT_KINDS[cls.kind] = cls
    return cls


def known_component_kinds() -> frozenset[str]:
    return frozenset(_COMPONENT_KINDS)


@dataclass
class Blueprint:
    """Entity recipe: ordered component kinds plus default attributes."""

    etype: str
    components: list[str]
    defaults: dict[str, Any] = field(default_factory=dict)


class BlueprintRegistry:
    def __init__(self) -> None:
        self._blueprints: dict[str, Blueprint] = {}

    def register(self, bp: Blueprint) -> None:
        if bp.etype in self._blueprints:
            raise DuplicateBlueprint(bp.etype)
        for kind in bp.components:
            if kind not in _COMPONENT_KINDS:
                raise UnknownComponentKind(kind)
        self._blueprints[bp.etype] = bp

    def get(self, etype: str) -> Blueprint:
        try:
            return self._blueprints[etype]
        except KeyError:
            raise UnknownBlueprint(etype) from None

    def __contains__(self, etype: str) -> bool:
        return etype in self._blueprints

    def __iter__(self) -> Iterator[str]:
        return iter(self._blueprints)


def register_blueprints(defs: dict[str, Any],
                        registry: BlueprintRegistry | None = None) -> BlueprintRegistry:
    """Build a registry from blueprint-file content.

    Accepts both the long form ``{"Door": {"components": [...], "defaults":
    {...}}}`` and the shorthand ``{"Door": ["CDoorState", "CGlyph"]}``.
    """
    registry = registry or BlueprintRegistry()
    for etype, spec in defs.items():
        if isinstance(spec, list):
            bp = Blueprint(etype, list(spec))
        else:
            bp = Blueprint(etype, list(spec.get("components", [])),
                           dict(spec.get("defaults", {})))
        registry.register(bp)
    return registry


class Entity:
    """A named container of components sharing one attribute map."""

    def __init__(self, eid: int, name: str, etype: str,
                 attrs: dict[str, Any]) -> None:
        self.id = eid
        self.name = name
        self.etype = etype
        self.attrs: dict[str, Any] = attrs
        self.components: list[Component] = []
        self._initial_attrs = copy.deepcopy(attrs)

    def ref(self) -> EntityRef:
        return EntityRef(self.name, self.etype)

    def component_of(self, kind: str) -> Component | None:
        for comp in self.components:
            if comp.kind == kind:
                return comp
        return None

    def reset_attrs(self) -> None:
        """Restore spawn-time attributes (level restart support)."""
        self.attrs.clear()
        self.attrs.update(copy.deepcopy(self._initial_attrs))


class EntityWorld:
    """Single-threaded entity container with deterministic message delivery.

    The owning simulation sets ``tick``; sends are rejected unless the
    message carries the current tick. ``sent_log`` accumulates every stamped
    emission until the owner drains it (once per simulation tick).
    """

    def __init__(self, registry: BlueprintRegistry) -> None:
        self.registry = registry
        self.tick = 0
        self._entities: list[Entity] = []
        self._by_name: dict[str, Entity] = {}
        self._next_id = 1
        self._next_seq = 0
        self.sent_log: list[Message] = []
        self.consumption_log: list[tuple[int, str, str]] | None = None

    def enable_consumption_log(self) -> None:
        self.consumption_log = []

    # -- construction -------------------------------------------------

    def spawn(self, etype: str, name: str,
              overrides: dict[str, Any] | None = None) -> Entity:
        bp = self.registry.get(etype)
        if name in self._by_name:
            raise DuplicateName(name)
        attrs = copy.deepcopy(bp.defaults)
        if overrides:
            attrs.update(copy.deepcopy(overrides))
        ent = Entity(self._next_id, name, etype, attrs)
        ent._initial_attrs = copy.deepcopy(attrs)
        self._next_id += 1
        for kind in bp.components:
            self._make_component(ent, kind)
        self._entities.append(ent)
        self._by_name[name] = ent
        return ent

    def _make_component(self, ent: Entity, kind: str) -> Component:
        try:
            cls = _COMPONENT_KINDS[kind]
        except KeyError:
            raise UnknownComponentKind(kind) from None
        comp = cls()
        comp.entity = ent
        comp.world = self
        ent.components.append(comp)
        return comp

    def attach(self, name: str, kind: str) -> Component:
        ent = self.entity(name)
        return self._make_component(ent, kind)

    def detach(self, name: str, kind: str) -> None:
        ent = self.entity(name)
        comp = ent.component_of(kind)
        if comp is None:
            if kind not in _COMPONENT_KINDS:
                raise UnknownComponentKind(kind)
            raise ComponentAbsent(name, kind)
        ent.components.remove(comp)
        comp.entity = None
        comp.world = None

    # -- lookup -------------------------------------------------------

    def entity(self, name: str) -> Entity:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownEntity(name) from None

    def has_entity(self, name: str) -> bool:
        return name in self._by_name

    def find(self, name: str) -> Entity | None:
        return self._by_name.get(name)

    def entities(self) -> list[Entity]:
        return list(self._entities)

    def ref(self, name: str) -> EntityRef:
        return self.entity(name).ref()

    # -- messaging ----------------------------------------------------

    def send(self, msg: Message, scope: str = "auto") -> int:
        """Deliver a message; returns the number of components that consumed it.

        ``scope`` is "entity" (target's components only), "broadcast"
        (every entity), or "auto" (targeted when ``msg.target`` is set).
        """
        if msg.tick != self.tick:
            raise StaleTick(msg.tick, self.tick)
        stamped = replace(msg, seq=self._next_seq)
        self._next_seq += 1
        self.sent_log.append(stamped)

        source_ent = self._by_name.get(stamped.source.name)
        if source_ent is not None:
            for comp in list(source_ent.components):
                comp.on_owner_sent(stamped)

        if scope == "auto":
            scope = "entity" if stamped.target is not None else "broadcast"
        if scope == "entity":
            if stamped.target is None:
                raise ValueError("entity scope requires a message target")
            targets = [self.entity(stamped.target.name)]
        else:
            targets = self._entities

        consumed = 0
        for ent in targets:
            for comp in list(ent.components):
                if comp.accept(stamped):
                    consumed += 1
                    if self.consumption_log is not None:
                        self.consumption_log.append(
                            (stamped.seq, ent.name, comp.kind))
        return consumed

    def drain_sent(self) -> list[Message]:
        out = self.sent_log
        self.sent_log = []
        return out

    def update_components(self, tick: int) -> None:
        for ent in self._entities:
            for comp in list(ent.components):
                comp.update(tick)

    # -- state --------------------------------------------------------

    def reset_attrs(self) -> None:
        for ent in self._entities:
            ent.reset_attrs()

    def canonical_state(self) -> tuple:
        """Deterministic snapshot of all entity attributes, for hashing."""
        return tuple(
            (ent.name, ent.etype, tuple(sorted(
                (k, repr(v)) for k, v in ent.attrs.items())))
            for ent in self._entities)
