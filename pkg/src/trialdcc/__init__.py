"""Coordinating-center service for a multi-center surveillance study.

Subpackages and modules:

- ``model``        shared domain types, canonical JSON, invariant checks
- ``eligibility``  configurable rule engine for the low-risk gate
- ``forms``        case report form schemas and write validation
- ``workflow``     the enrollment state machine (pure transitions)
- ``access``       role/site capability policy and de-identified export
- ``store``        durable persistence, embedded and relational drivers
- ``notifier``     transactional outbox and delivery transports
- ``service``      the application service uniting everything
- ``api``          HTTP/JSON portal surface
- ``cli``          administrative command line
"""

__version__ = "0.1.0"
