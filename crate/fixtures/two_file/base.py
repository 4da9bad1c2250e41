"""Basic arithmetic building blocks."""

precision = 2


class Calculator:
    """Performs simple arithmetic on two operands."""

    def add(self, a, b):
        return a + b

    def multiply(self, a, b):
        return a * b


def format_result(value):
    return "Result: " + str(value)
