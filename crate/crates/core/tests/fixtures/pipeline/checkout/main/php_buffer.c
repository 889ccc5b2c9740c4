#include "php.h"
#include "php_buffer.h"

PHPAPI void php_buffer_init(php_buffer *buf, char *storage, size_t cap)
{
    buf->data = storage;
    buf->used = 0;
    buf->cap = cap;
}

PHPAPI int php_buffer_append(php_buffer *buf, const char *src, size_t len)
{
    size_t room = buf->cap - buf->used;
    if (len > room + 1) {
        return FAILURE;
    }
    memcpy(buf->data + buf->used, src, len);
    buf->used += len;
    return SUCCESS;
}
