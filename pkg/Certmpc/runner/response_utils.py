def flatten_errors(errors, prefix=''):
    """
    Convert serializer errors to ``"field: message"`` lines

    Nested section errors are joined with dots, e.g. ``task.discount: ...``.
    """
    if errors is None:
        return []
    if isinstance(errors, str):
        return [f"{prefix}: {errors}" if prefix else errors]
    if isinstance(errors, dict):
        error_list = []
        for field, field_errors in errors.items():
            if field == "non_field_errors":
                name = prefix
            else:
                name = f"{prefix}.{field}" if prefix else field
            error_list.extend(flatten_errors(field_errors, name))
        return error_list
    if isinstance(errors, (list, tuple)):
        error_list = []
        for index, error in enumerate(errors):
            if isinstance(error, (dict, list)) and error:
                error_list.extend(flatten_errors(error, f"{prefix}[{index}]" if isinstance(error, dict) else prefix))
            elif error:
                error_list.extend(flatten_errors(str(error), prefix))
        return error_list
    return [f"{prefix}: {errors}" if prefix else str(errors)]


def success_response(message, data=None):
    """
    Create a standardized success payload

    Args:
        message (str): Success message
        data (dict, optional): Result data

    Returns:
        dict: Standardized success payload
    """
    return {
        "status": True,
        "message": message,
        "data": data or {}
    }


def error_response(message, errors=None):
    """
    Create a standardized error payload

    Args:
        message (str): Error message
        errors (list, dict or str, optional): Error details

    Returns:
        dict: Standardized error payload
    """
    if errors is None:
        errors = []
    elif isinstance(errors, (dict, str)):
        errors = flatten_errors(errors)

    return {
        "status": False,
        "message": message,
        "errors": errors
    }
