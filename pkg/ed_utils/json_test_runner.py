"""
JSON test runner.

Prints one document: a record per test (name, outcome, feedback, area and
index from @number, run time) followed by pass counts overall and per area.
"""
import inspect
import json
import sys
import time
from collections import defaultdict

from unittest import result
from unittest.signals import registerResult
import ed_utils.decorators as decorators

DECORATOR_CLASSES = [
    klass for _name, klass in inspect.getmembers(decorators)
    if (
        inspect.isclass(klass)
        and issubclass(klass, decorators.Decorator)
        and klass != decorators.Decorator
    )
]

UNNUMBERED = "unnumbered"


def record_key(record):
    index = record.get("index", 0)
    return record.get("area", UNNUMBERED), (0, index) if isinstance(index, int) else (1, str(index)), record["name"]


class JSONTestResult(result.TestResult):
    """ Collects a JSON-ready record per test into `records`. Used by JSONTestRunner. """

    def __init__(self, stream, descriptions, verbosity, records):
        super().__init__(stream, descriptions, verbosity)
        self.descriptions = descriptions
        self.records = records
        self._started = {}

    def getDescription(self, test):
        doc_first_line = test.shortDescription()
        if self.descriptions and doc_first_line:
            return doc_first_line
        return test._testMethodName

    def getOutput(self):
        if not self.buffer:
            return ""
        out = self._stdout_buffer.getvalue()
        err = self._stderr_buffer.getvalue()
        if err:
            if out and not out.endswith('\n'):
                out += '\n'
            out += err
        return out

    def startTest(self, test):
        self._started[test.id()] = time.perf_counter()
        super().startTest(test)

    def buildResult(self, test, err=None):
        output = self.getOutput()
        record = {
            "id": test.id(),
            "name": self.getDescription(test),
            "passed": err is None,
            "seconds": round(time.perf_counter() - self._started.get(test.id(), time.perf_counter()), 3),
        }
        method = getattr(test, test._testMethodName, None)
        for dec in DECORATOR_CLASSES:
            dec.change_result(getattr(method, dec.get_attr_name(), None), record, output, err)
        return record

    def addSuccess(self, test):
        super().addSuccess(test)
        self.records.append(self.buildResult(test))

    def addError(self, test, err):
        super().addError(test, err)
        # keep captured output out of the JSON stream
        self._mirrorOutput = False
        self.records.append(self.buildResult(test, err))

    def addFailure(self, test, err):
        super().addFailure(test, err)
        self._mirrorOutput = False
        self.records.append(self.buildResult(test, err))

    def addSkip(self, test, reason):
        super().addSkip(test, reason)
        record = self.buildResult(test)
        record["skipped"] = reason
        self.records.append(record)


class JSONTestRunner:
    """ Runs a suite and dumps the collected records as JSON to `stream`. """
    resultclass = JSONTestResult

    def __init__(self, stream=sys.stdout, descriptions=True, verbosity=1, failfast=False, buffer=True):
        self.stream = stream
        self.descriptions = descriptions
        self.verbosity = verbosity
        self.failfast = failfast
        self.buffer = buffer
        self.json_data = {"testcases": []}

    def summarize(self):
        cases = self.json_data["testcases"]
        cases.sort(key=record_key)
        areas = defaultdict(lambda: {"passed": 0, "total": 0})
        for case in cases:
            counts = areas[case.get("area", UNNUMBERED)]
            counts["total"] += 1
            counts["passed"] += case["passed"]
        self.json_data["areas"] = dict(sorted(areas.items()))
        self.json_data["passed"] = sum(1 for case in cases if case["passed"])
        self.json_data["total"] = len(cases)

    def run(self, test):
        result = self.resultclass(self.stream, self.descriptions, self.verbosity, self.json_data["testcases"])
        registerResult(result)
        result.failfast = self.failfast
        result.buffer = self.buffer
        result.startTestRun()
        try:
            test(result)
        finally:
            result.stopTestRun()
        self.summarize()
        json.dump(self.json_data, self.stream, indent=4)
        self.stream.write('\n')
        return result
