from .session_review_agent import session_review_agent
from .questionnaire_agent import questionnaire_agent

__all__ = [
    "session_review_agent",
    "questionnaire_agent",
]
