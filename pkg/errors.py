"""
Fehlerklassen für DPA / SS-DPA
"""


class DPAError(Exception):
    """Basisklasse aller fachlichen Fehler dieses Pakets."""


class DatasetParseError(DPAError, ValueError):
    """Eingabedatei ist kaputt (Magic, Dimension, Wertebereich, Label)."""

    def __init__(self, message, path=None, offset=None, row=None):
        self.path = path
        self.offset = offset
        self.row = row
        ort = []
        if path:
            ort.append(str(path))
        if offset is not None:
            ort.append(f"Byte-Offset {offset}")
        if row is not None:
            ort.append(f"Zeile {row}")
        if ort:
            message = f"{message} ({', '.join(ort)})"
        super().__init__(message)


class InvalidArgumentError(DPAError, ValueError):
    pass


class PreconditionError(DPAError, ValueError):
    pass


class DegenerateInputError(DPAError, ValueError):
    pass


class EnumerationCapExceeded(DPAError):
    """Das Orakel müsste mehr Mengen aufzählen als erlaubt."""

    def __init__(self, required, cap):
        self.required = required
        self.cap = cap
        super().__init__(
            f"Aufzählung benötigt {required} Mengen, Limit ist {cap}"
        )


class StaleArtifactError(DPAError):
    """Artefakt passt nicht mehr zu den Eingabedateien."""


class ConfigError(DPAError, ValueError):
    """Konfiguration ungültig; `fields` enthält {feld: meldung}."""

    def __init__(self, fields):
        self.fields = dict(fields)
        details = '; '.join(f"{k}: {v}" for k, v in sorted(self.fields.items()))
        super().__init__(f"Ungültige Konfiguration - {details}")
