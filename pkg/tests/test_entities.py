import pytest

from replaytest.entities import (Component, ComponentAbsent,
                                 DuplicateBlueprint, DuplicateName,
                                 EntityRef, EntityWorld, Message, StaleTick,
                                 UnknownBlueprint, UnknownComponentKind,
                                 component_kind, register_blueprints)


@component_kind
class CCounter(Component):
    kind = "CCounter"

    def accept(self, msg):
        if msg.mtype == "Ping":
            self.entity.attrs["count"] = self.entity.attrs.get("count", 0) + 1
            return True
        return False


def make_registry():
    return register_blueprints({
        "Door": {"components": ["CDoorState", "CGlyph"]},
        "DoorButton": {"components": ["CSwitchState"],
                       "defaults": {"target": "", "pressed": False}},
        "Pinger": {"components": ["CCounter"]},
    })


class TestRegisterBlueprints:
    def test_single_entry(self):
        reg = register_blueprints({"Door": ["CDoorState", "CGlyph"]})
        assert "Door" in reg
        assert reg.get("Door").components == ["CDoorState", "CGlyph"]

    def test_unknown_component_kind(self):
        with pytest.raises(UnknownComponentKind):
            register_blueprints({"Door": ["CNope"]})

    def test_data_only_composition(self):
        # a new entity type from existing component kinds plus defaults,
        # no code involved
        reg = register_blueprints({
            "BreakableDoor": {
                "components": ["CDoorState", "CGlyph", "CState"],
                "defaults": {"open": False, "hp": 10}}})
        bp = reg.get("BreakableDoor")
        assert bp.defaults["hp"] == 10

    def test_duplicate_rejected(self):
        reg = register_blueprints({"Door": ["CDoorState"]})
        with pytest.raises(DuplicateBlueprint):
            register_blueprints({"Door": ["CDoorState"]}, reg)


class TestSpawn:
    def test_spawn_applies_overrides(self):
        world = EntityWorld(make_registry())
        ent = world.spawn("DoorButton", "Button1", {"target": "Door1"})
        assert ent.name == "Button1"
        assert ent.etype == "DoorButton"
        assert ent.attrs["target"] == "Door1"
        assert ent.attrs["pressed"] is False

    def test_duplicate_name(self):
        world = EntityWorld(make_registry())
        world.spawn("Door", "Door1")
        with pytest.raises(DuplicateName):
            world.spawn("Door", "Door1")

    def test_unknown_blueprint(self):
        world = EntityWorld(make_registry())
        with pytest.raises(UnknownBlueprint):
            world.spawn("Ghost", "g")

    def test_empty_overrides_equal_defaults(self):
        world = EntityWorld(make_registry())
        ent = world.spawn("DoorButton", "b")
        assert ent.attrs == {"target": "", "pressed": False}


class TestSend:
    def test_targeted_consumption(self):
        world = EntityWorld(make_registry())
        world.spawn("Pinger", "p1")
        msg = Message.make(0, "Ping", EntityRef("p1", "Pinger"),
                           EntityRef("p1", "Pinger"))
        assert world.send(msg) == 1
        assert world.entity("p1").attrs["count"] == 1

    def test_broadcast_no_interest(self):
        world = EntityWorld(make_registry())
        world.spawn("Door", "Door1")
        before = world.canonical_state()
        count = world.send(Message.make(0, "Nobody", EntityRef("x", "y")))
        assert count == 0
        assert world.canonical_state() == before

    def test_stale_tick(self):
        world = EntityWorld(make_registry())
        world.spawn("Pinger", "p1")
        world.tick = 5
        with pytest.raises(StaleTick):
            world.send(Message.make(4, "Ping", EntityRef("p1", "Pinger")))

    def test_delivery_order_stable(self):
        # same construction + same sends => identical consumption logs
        def run():
            world = EntityWorld(make_registry())
            world.enable_consumption_log()
            for name in ("p1", "p2", "p3"):
                world.spawn("Pinger", name)
            for _ in range(3):
                world.send(Message.make(0, "Ping", EntityRef("p1", "Pinger")))
            return list(world.consumption_log)

        assert run() == run()

    def test_broadcast_reaches_all_in_order(self):
        world = EntityWorld(make_registry())
        world.enable_consumption_log()
        world.spawn("Pinger", "p2")
        world.spawn("Pinger", "p1")
        world.send(Message.make(0, "Ping", EntityRef("ext", "Ext")))
        consumers = [name for _, name, _ in world.consumption_log]
        assert consumers == ["p2", "p1"]    # insertion order, not name order


class TestAttachDetach:
    def test_attach_then_detach(self):
        world = EntityWorld(make_registry())
        world.spawn("Door", "Door1")
        world.attach("Door1", "CCounter")
        msg = Message.make(0, "Ping", EntityRef("Door1", "Door"),
                           EntityRef("Door1", "Door"))
        assert world.send(msg) == 1
        world.detach("Door1", "CCounter")
        assert world.send(msg) == 0

    def test_detach_absent(self):
        world = EntityWorld(make_registry())
        world.spawn("Door", "Door1")
        with pytest.raises(ComponentAbsent):
            world.detach("Door1", "CCounter")

    def test_attach_unknown_kind(self):
        world = EntityWorld(make_registry())
        world.spawn("Door", "Door1")
        with pytest.raises(UnknownComponentKind):
            world.attach("Door1", "CBogus")


def test_message_conservation():
    # send returns exactly the number of consuming accepts
    world = EntityWorld(make_registry())
    for name in ("a", "b"):
        world.spawn("Pinger", name)
    count = world.send(Message.make(0, "Ping", EntityRef("ext", "Ext")))
    assert count == 2
    total = sum(world.entity(n).attrs["count"] for n in ("a", "b"))
    assert total == 2
