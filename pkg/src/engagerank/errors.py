"""Exception types shared across the toolkit."""


class EngageRankError(Exception):
    """Base class for all toolkit errors."""


class SchemaViolation(EngageRankError):
    def __init__(self, line_no, field, message=""):
        self.line_no = line_no
        self.field = field
        detail = f" ({message})" if message else ""
        super().__init__(f"line {line_no}: bad value for '{field}'{detail}")


class MissingProfile(EngageRankError):
    def __init__(self, user_id):
        self.user_id = user_id
        super().__init__(f"interaction references unknown user '{user_id}'")


class EmptyDataset(EngageRankError):
    pass


class TooFewUsers(EngageRankError):
    pass


class InvalidConfig(EngageRankError):
    pass


class NonFiniteFeature(EngageRankError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"feature {index} is not finite")


class Diverged(EngageRankError):
    pass


class SingularSystem(EngageRankError):
    pass


class SchemaMismatch(EngageRankError):
    pass


class NoUsefulWeakRanker(EngageRankError):
    pass


class IdSetMismatch(EngageRankError):
    pass


class EmptyRankerSet(EngageRankError):
    pass


class DegenerateLabels(EngageRankError):
    pass


class MissingLabel(EngageRankError):
    def __init__(self, tweet_id):
        self.tweet_id = tweet_id
        super().__init__(f"no label for tweet '{tweet_id}'")


class DegenerateDifferences(EngageRankError):
    pass
