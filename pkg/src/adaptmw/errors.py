"""Exception hierarchy shared by every layer of the kernel."""


class MiddlewareError(Exception):
    """Base class for all errors raised by adaptmw."""


# -- component model -------------------------------------------------------

class MalformedTemplate(MiddlewareError):
    pass


class AdlSyntaxError(MalformedTemplate):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnknownInstance(MiddlewareError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class UnknownInterface(MiddlewareError):
    pass


class UnknownOperation(MiddlewareError):
    pass


class UnknownBehavior(MalformedTemplate):
    pass


class RoleMismatch(MiddlewareError):
    pass


class SignatureMismatch(MiddlewareError):
    pass


class AlreadyBound(MiddlewareError):
    pass


class ScopeMismatch(MiddlewareError):
    """Both ends of a binding must live in the same enclosing composite."""


class UnknownBinding(MiddlewareError):
    pass


class Unbound(MiddlewareError):
    pass


class NotStarted(MiddlewareError):
    pass


class InterceptorVeto(MiddlewareError):
    """Raised by an interceptor to refuse a call on non-functional grounds."""

    def __init__(self, reason="vetoed", interceptor=None):
        super().__init__(reason)
        self.reason = reason
        self.interceptor = interceptor


class UnknownFacet(MiddlewareError):
    pass


class IllegalTransition(MiddlewareError):
    pass


class UnboundMandatoryInterface(MiddlewareError):
    pass


class QuiescenceError(MiddlewareError):
    pass


# -- personalities ---------------------------------------------------------

class CompositionError(MiddlewareError):
    pass


class MissingInterface(CompositionError):
    pass


class UnknownMember(MiddlewareError):
    pass


# -- environment -----------------------------------------------------------

class MalformedXml(MiddlewareError, ValueError):
    pass


class MissingId(MalformedXml):
    pass


class UnknownMonitor(MiddlewareError):
    pass


class InactiveMonitor(MiddlewareError):
    pass


class UnknownNode(MiddlewareError):
    pass


# -- directory -------------------------------------------------------------

class DuplicateId(MiddlewareError):
    pass


class LevelMismatch(MiddlewareError):
    pass


class MissingOffer(MiddlewareError):
    pass


class OfferMismatch(MiddlewareError):
    pass


class NoMatch(MiddlewareError):
    def __init__(self, message, service=None, contract=None):
        super().__init__(message)
        self.service = service
        self.contract = contract


class CycleDetected(MiddlewareError):
    pass


class UnknownPath(MiddlewareError):
    pass


class InUse(MiddlewareError):
    pass


# -- contracts -------------------------------------------------------------

class WeaveFailure(MiddlewareError):
    pass


class IncoherentBundle(MiddlewareError):
    pass


class UnknownSubscription(MiddlewareError):
    pass


class UnknownContract(MiddlewareError):
    pass


class IllegalContractState(MiddlewareError):
    pass


class AlreadyDestroyed(IllegalContractState):
    pass


# -- harness ---------------------------------------------------------------

class ScenarioParseError(MiddlewareError):
    pass


class TraceMismatch(MiddlewareError):
    def __init__(self, message, diff=""):
        super().__init__(message)
        self.diff = diff


class FunctionalMismatch(MiddlewareError):
    pass


class BenchPreconditionError(MiddlewareError, ValueError):
    pass
