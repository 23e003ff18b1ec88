"""Reflective component runtime: templates, instances, bindings, interceptors."""
from .adl import parse_adl, parse_one, serialize_adl
from .behaviors import App, BUILTIN_BEHAVIORS, Echo, Recorder, Veto
from .model import (Binding, BindingSpec, ComponentTemplate, Composite,
                    InterfaceDecl, LifecycleState, Operation, Primitive, Role,
                    TemplateLibrary, client, server)
from .runtime import (Behavior, ComponentContext, ComponentInstance, Interceptor,
                      Runtime)

__all__ = [
    "App", "BUILTIN_BEHAVIORS", "Behavior", "Binding", "BindingSpec",
    "ComponentContext", "ComponentInstance", "ComponentTemplate", "Composite",
    "Echo", "Interceptor", "InterfaceDecl", "LifecycleState", "Operation",
    "Primitive", "Recorder", "Role", "Runtime", "TemplateLibrary", "Veto",
    "client", "parse_adl", "parse_one", "serialize_adl", "server",
]
