"""
API key check for the planning endpoints
"""
import logging
from typing import Annotated

from fastapi import Header, HTTPException, status

import config

logger = logging.getLogger(__name__)


async def verify_api_key(x_api_key: Annotated[str | None, Header(alias=config.API_KEY_HEADER)] = None) -> str:
    """
    Verify the plan-service key from request headers

    Args:
        x_api_key: Key sent in the x-api-key header

    Raises:
        HTTPException: 401 if the key is missing or does not match DOG_API_KEY

    Returns:
        The normalized key
    """
    if not x_api_key:
        raise HTTPException(
            status_code=status.HTTP_401_UNAUTHORIZED,
            detail=f"Missing API key. Please provide the {config.API_KEY_HEADER} header."
        )

    provided = x_api_key.strip().strip("\"'")
    if provided != config.API_KEY:
        logger.info("rejected request with an invalid API key")
        raise HTTPException(
            status_code=status.HTTP_401_UNAUTHORIZED,
            detail="Invalid API key"
        )

    return provided
