"""Random platforms for the property and oracle tests.

Everything is drawn from a ``random.Random`` so a single integer seed
reproduces a case.  Environments and offers are produced twice: as plain
dicts and tuples for the oracles, and as package objects for the code under
test.
"""
from adaptmw.directory import (INSTANCE, TEMPLATE, TYPE, AdaptationRule, Directory,
                               NeedDescriptor, OfferDescriptor, Requirement)
from adaptmw.environment import (Constraint, Cpu, EnvironmentDescriptor, Equals, GreaterThan,
                                 LessThan, Network, Quantity)
from adaptmw.errors import CycleDetected

SERVICES = ["transaction", "security", "persistence"]
MODELS = ["flat", "nested", "acl"]
VERSIONS = ["1.0", "1.3", "1.10", "2.0"]
NUMBERS = [0, 0.5, 1, 3, 6, 11]
QUANTITY_FIELDS = {"network.bandwidth": ["Mbps", "Kbps"], "cpu.speed": ["GHz", "MHz"]}
TEXT_FIELDS = {"network.protocol": ["IEEE 802.11b", "Bluetooth"],
               "cpu.type": ["Pentium IV", "ARM"],
               "software.execution_environment": ["jdk1.4", "jdk1.5"]}
FIELDS = sorted(QUANTITY_FIELDS) + sorted(TEXT_FIELDS)


def text_of(value):
    if isinstance(value, tuple):
        n, unit = value
        return f"{int(n) if n == int(n) else n} {unit}"
    return value


def rand_value(rng, field):
    if field in QUANTITY_FIELDS:
        return (float(rng.choice(NUMBERS)), rng.choice(QUANTITY_FIELDS[field]))
    return rng.choice(TEXT_FIELDS[field])


def rand_constraint(rng):
    field = rng.choice(FIELDS)
    value = rand_value(rng, field)
    if field in QUANTITY_FIELDS:
        op = rng.choice(["lt", "gt", "eq"])
        return (field, op, text_of(value) if op == "eq" else value)
    return (field, "eq", value)


def to_constraint(c):
    field, op, value = c
    if op == "eq":
        return Constraint(field, Equals(value))
    q = Quantity(*value)
    return Constraint(field, LessThan(q) if op == "lt" else GreaterThan(q))


def rand_env(rng):
    env = {f: rand_value(rng, f) for f in FIELDS if rng.random() < 0.8}
    return env, to_descriptor(env)


def to_descriptor(env):
    def q(field):
        return Quantity(*env[field]) if field in env else None

    net = Network(q("network.bandwidth"), env.get("network.protocol"))
    cpu = Cpu(env.get("cpu.type"), q("cpu.speed"))
    return EnvironmentDescriptor("node", net, cpu, env.get("software.execution_environment"))


def rand_offer(rng, service, model=None, version=None):
    return {"service": service, "model": model or rng.choice(MODELS),
            "version": version or rng.choice(VERSIONS),
            "ideal": [rand_constraint(rng) for _ in range(rng.randint(0, 3))]}


def to_offer(o):
    return OfferDescriptor("", o["service"], o["model"], o["version"],
                           tuple(to_constraint(c) for c in o["ideal"]))


def holding_constraint(rng, env):
    """A constraint the environment ``env`` satisfies, when it can be built."""
    field = rng.choice(sorted(env))
    value = env[field]
    if field not in QUANTITY_FIELDS:
        return (field, "eq", value)
    n, unit = value
    op = rng.choice(["lt", "gt", "eq"])
    if op == "eq":
        return (field, "eq", text_of(value))
    return (field, op, (n + 1.0, unit) if op == "lt" else (n - 0.5, unit))


def rand_need(rng, env=None):
    """A need; with ``env`` given, most constraints are drawn to hold in it."""
    services = rng.sample(SERVICES[:2], rng.randint(1, 2))
    required = [{"service": s,
                 "model": rng.choice([None] * 6 + MODELS),
                 "min_version": rng.choice([None] * 6 + VERSIONS)}
                for s in services]
    constraints = []
    for _ in range(rng.randint(0, 2)):
        if env and rng.random() < 0.75:
            constraints.append(holding_constraint(rng, env))
        else:
            constraints.append(rand_constraint(rng))
    need = {"required": required, "constraints": constraints}
    obj = NeedDescriptor("app", tuple(Requirement(r["service"], r["model"], r["min_version"])
                                      for r in required),
                         tuple(to_constraint(c) for c in constraints))
    return need, obj


def rand_query(rng):
    """(need, need object, env, env object, service filter) for one lookup."""
    env, env_obj = rand_env(rng)
    need, need_obj = rand_need(rng, env)
    service = rng.choice([None] + [r["service"] for r in need["required"]])
    return need, need_obj, env, env_obj, service


def rand_directory(rng, max_instances=20, max_rules=10):
    """Returns (oracle view, rules as triples, Directory)."""
    d = Directory()
    spec = []
    n_inst = rng.randint(0, max_instances)
    n_templates = 0 if rng.random() < 0.05 else rng.randint(1, 6)
    for ti in range(n_templates):
        service = SERVICES[ti % 2] if rng.random() < 0.8 else rng.choice(SERVICES[:2])
        if f"/{service}" not in [ty.path for ty in d.types.values()]:
            d.import_(TYPE, service)
        offer = rand_offer(rng, service)
        spec.append({"id": f"t{ti}", "offer": offer, "instances": []})
        d.import_(TEMPLATE, f"t{ti}", f"/{service}", to_offer(offer))
    if spec:
        for ii in range(n_inst):
            t = rng.choice(spec)
            o = t["offer"]
            offer = o if rng.random() < 0.5 else rand_offer(rng, o["service"], o["model"],
                                                            o["version"])
            t["instances"].append((f"i{ii}", offer))
            d.import_(INSTANCE, f"i{ii}", f"/{o['service']}/{t['id']}", to_offer(offer))
    names = [t["id"] for t in spec] + [i for t in spec for i, _ in t["instances"]]
    rules = []
    if len(names) >= 2:
        for _ in range(rng.randint(0, max_rules)):
            a, b = rng.sample(names, 2)
            owner = next(t for t in spec if a == t["id"] or a in dict(t["instances"]))
            scope = owner["offer"]["service"] if rng.random() < 0.8 else rng.choice(SERVICES[:2])
            try:
                d.add_rule(AdaptationRule(scope, a, b))
                rules.append((scope, a, b))
            except CycleDetected:
                pass
    return spec, rules, d
